#include "mechid/decoder.hpp"

#include "mechid/errors.hpp"

#include <cmath>
#include <sstream>
#include <variant>

namespace mechid {

MonotoneMap MonotoneMap::parse(const std::string& name) {
  MonotoneMap m;
  if (name == "identity") {
    m.kind = Kind::identity;
  } else if (name == "sinh") {
    m.kind = Kind::sinh;
  } else if (name == "tanh") {
    m.kind = Kind::tanh;
  } else if (name == "exp") {
    m.kind = Kind::exp;
  } else if (name.rfind("cubic", 0) == 0) {
    m.kind = Kind::cubic;
    m.coefficient = 0.1;
    if (auto colon = name.find(':'); colon != std::string::npos) m.coefficient = std::stod(name.substr(colon + 1));
    if (!(m.coefficient > 0.0)) throw InvalidInput("cubic coefficient must be positive");
  } else {
    throw InvalidInput("unknown monotone map '" + name + "'");
  }
  return m;
}

std::string MonotoneMap::name() const {
  switch (kind) {
    case Kind::identity:
      return "identity";
    case Kind::sinh:
      return "sinh";
    case Kind::tanh:
      return "tanh";
    case Kind::exp:
      return "exp";
    case Kind::cubic: {
      std::ostringstream os;
      os.precision(17);
      os << "cubic:" << coefficient;
      return os.str();
    }
  }
  return "unknown";
}

double MonotoneMap::apply(double y) const {
  switch (kind) {
    case Kind::identity:
      return y;
    case Kind::sinh:
      return std::sinh(y);
    case Kind::tanh:
      return std::tanh(y);
    case Kind::exp:
      return std::exp(y);
    case Kind::cubic:
      return y + coefficient * y * y * y;
  }
  return y;
}

double MonotoneMap::inverse(double x) const {
  switch (kind) {
    case Kind::identity:
      return x;
    case Kind::sinh:
      return std::asinh(x);
    case Kind::tanh:
      if (!(std::abs(x) < 1.0)) throw OffManifoldError("tanh decoder: observation outside (-1, 1)");
      return std::atanh(x);
    case Kind::exp:
      if (!(x > 0.0)) throw OffManifoldError("exp decoder: observation not positive");
      return std::log(x);
    case Kind::cubic: {
      // Cardano's real root of c y^3 + y - x = 0, then two Newton steps.
      const double c = coefficient;
      const double q = x / (2.0 * c);
      const double r = std::sqrt(q * q + 1.0 / (27.0 * c * c * c));
      double y = std::cbrt(q + r) + std::cbrt(q - r);
      for (int i = 0; i < 2; ++i) y -= (c * y * y * y + y - x) / (3.0 * c * y * y + 1.0);
      return y;
    }
  }
  return x;
}

double MonotoneMap::derivative(double y) const {
  switch (kind) {
    case Kind::identity:
      return 1.0;
    case Kind::sinh:
      return std::cosh(y);
    case Kind::tanh: {
      const double t = std::tanh(y);
      return 1.0 - t * t;
    }
    case Kind::exp:
      return std::exp(y);
    case Kind::cubic:
      return 1.0 + 3.0 * coefficient * y * y;
  }
  return 1.0;
}

namespace {

struct LinearPart {
  Matrix G;
  Matrix left_inverse;

  explicit LinearPart(Matrix g) : G(std::move(g)) {
    if (G.rows() < G.cols() || G.cols() < 1) throw InvalidInput("decoder matrix must be n x d with n >= d >= 1");
    if (!G.allFinite()) throw NonFiniteError("decoder matrix has non-finite entries");
    Eigen::JacobiSVD<Matrix> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    if (!(s(s.size() - 1) > 1e-9 * s(0))) throw InvalidInput("decoder matrix must have full column rank");
    left_inverse = svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  }

  Vector project(const Vector& y) const {
    Vector z = left_inverse * y;
    const double miss = (G * z - y).norm();
    if (miss > Decoder::kManifoldTolerance * (1.0 + y.norm())) {
      std::ostringstream os;
      os << "observation is off the decoder image (residual " << miss << ")";
      throw OffManifoldError(os.str());
    }
    return z;
  }
};

struct Structured {
  LinearPart linear;
  std::vector<MonotoneMap> maps;
};

}  // namespace

struct Decoder::Impl {
  struct Reparam {
    Decoder base;
    Bijection a;
  };
  std::variant<LinearPart, Structured, Reparam> variant;
  int d = 0;
  int n = 0;
};

Decoder Decoder::linear(Matrix G) {
  auto impl = std::make_shared<Impl>(Impl{LinearPart(std::move(G)), 0, 0});
  const auto& lp = std::get<LinearPart>(impl->variant);
  impl->d = static_cast<int>(lp.G.cols());
  impl->n = static_cast<int>(lp.G.rows());
  return Decoder(std::move(impl));
}

Decoder Decoder::structured(Matrix G, std::vector<MonotoneMap> maps) {
  LinearPart lp(std::move(G));
  if (static_cast<Eigen::Index>(maps.size()) != lp.G.rows()) {
    throw InvalidInput("structured decoder needs one monotone map per observation coordinate");
  }
  const int d = static_cast<int>(lp.G.cols());
  const int n = static_cast<int>(lp.G.rows());
  return Decoder(std::make_shared<Impl>(Impl{Structured{std::move(lp), std::move(maps)}, d, n}));
}

Decoder Decoder::reparametrized(const Decoder& base, Bijection a) {
  if (!a.forward || !a.inverse) throw InvalidInput("reparametrization needs both directions of the bijection");
  const int d = base.latent_dim();
  const int n = base.obs_dim();
  return Decoder(std::make_shared<Impl>(Impl{Impl::Reparam{base, std::move(a)}, d, n}));
}

int Decoder::latent_dim() const { return impl_->d; }
int Decoder::obs_dim() const { return impl_->n; }

Vector Decoder::decode(const Vector& z) const {
  if (z.size() != impl_->d) throw InvalidInput("decode: latent dimension mismatch");
  return std::visit(
      [&](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LinearPart>) {
          return v.G * z;
        } else if constexpr (std::is_same_v<T, Structured>) {
          Vector y = v.linear.G * z;
          for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = v.maps[static_cast<std::size_t>(i)].apply(y(i));
          return y;
        } else {
          return v.base.decode(v.a.inverse(z));
        }
      },
      impl_->variant);
}

Vector Decoder::encode(const Vector& x) const {
  if (x.size() != impl_->n) throw InvalidInput("encode: observation dimension mismatch");
  return std::visit(
      [&](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LinearPart>) {
          return v.project(x);
        } else if constexpr (std::is_same_v<T, Structured>) {
          Vector y(x.size());
          for (Eigen::Index i = 0; i < x.size(); ++i) y(i) = v.maps[static_cast<std::size_t>(i)].inverse(x(i));
          return v.linear.project(y);
        } else {
          return v.a.forward(v.base.encode(x));
        }
      },
      impl_->variant);
}

bool Decoder::is_linear() const { return std::holds_alternative<LinearPart>(impl_->variant); }

const Matrix& Decoder::linear_part() const {
  if (const auto* lp = std::get_if<LinearPart>(&impl_->variant)) return lp->G;
  if (const auto* st = std::get_if<Structured>(&impl_->variant)) return st->linear.G;
  throw InvalidInput("reparametrized decoder has no single linear part");
}

std::string Decoder::describe() const {
  std::ostringstream os;
  if (std::holds_alternative<LinearPart>(impl_->variant)) {
    os << "linear";
  } else if (const auto* st = std::get_if<Structured>(&impl_->variant)) {
    os << "structured(";
    for (std::size_t i = 0; i < st->maps.size(); ++i) os << (i ? "," : "") << st->maps[i].name();
    os << ")";
  } else {
    const auto& r = std::get<Impl::Reparam>(impl_->variant);
    os << r.base.describe() << " o " << (r.a.label.empty() ? "a" : r.a.label) << "^-1";
  }
  os << " " << impl_->n << "x" << impl_->d;
  return os.str();
}

}  // namespace mechid
