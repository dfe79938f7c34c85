#include "mechid/dynamics.hpp"

#include "mechid/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace mechid {

Vector GeneralMechanism::apply(const Vector& z) const {
  if (z.size() != d) throw InvalidInput("mechanism '" + label + "': latent dimension mismatch");
  return map(z);
}

AffineMechanism::AffineMechanism(Matrix transition, Vector offset, std::string name)
    : M(std::move(transition)), b(std::move(offset)), label(std::move(name)) {
  if (M.rows() < 1 || M.rows() != M.cols()) throw InvalidInput("mechanism matrix must be square with d >= 1");
  if (b.size() != M.rows()) throw InvalidInput("mechanism offset length must equal d");
  if (!M.allFinite() || !b.allFinite()) throw NonFiniteError("mechanism has non-finite parameters");
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (!(s(s.size() - 1) > kRankTolerance * s(0))) {
    throw InvalidInput("mechanism matrix must be invertible" + (label.empty() ? std::string() : " ('" + label + "')"));
  }
}

Vector AffineMechanism::apply(const Vector& z) const {
  if (z.size() != dim()) throw InvalidInput("mechanism '" + label + "': latent dimension mismatch");
  return M * z + b;
}

GeneralMechanism AffineMechanism::as_general() const {
  Matrix m = M;
  Vector off = b;
  return GeneralMechanism{[m, off](const Vector& z) -> Vector { return m * z + off; }, label, dim()};
}

AffineMechanism AffineMechanism::identity(int d, std::string name) {
  return AffineMechanism(Matrix::Identity(d, d), Vector::Zero(d), std::move(name));
}

int mechanism_dim(const Mechanism& m) {
  return std::visit(
      [](const auto& v) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, AffineMechanism>) {
          return v.dim();
        } else {
          return v.d;
        }
      },
      m);
}

const std::string& mechanism_label(const Mechanism& m) {
  return std::visit([](const auto& v) -> const std::string& { return v.label; }, m);
}

Vector apply_mechanism(const AffineMechanism& m, const Vector& z) { return m.apply(z); }
Vector apply_mechanism(const GeneralMechanism& m, const Vector& z) { return m.apply(z); }
Vector apply_mechanism(const Mechanism& m, const Vector& z) {
  return std::visit([&](const auto& v) { return v.apply(z); }, m);
}

Vector StochasticMechanism::apply(const Vector& z, const Vector& u) const {
  if (z.size() != d || u.size() != d) throw InvalidInput("stochastic mechanism '" + label + "': dimension mismatch");
  return kernel(z, u);
}

StochasticMechanism additive_noise_mechanism(const NoiseSpec& noise, std::string label) {
  noise.validate();
  return StochasticMechanism{[noise](const Vector& z, const Vector& u) -> Vector { return z + noise.transform(u); },
                             std::move(label), noise.d};
}

StochasticMechanism affine_noise_mechanism(const AffineMechanism& m, const NoiseSpec& noise) {
  noise.validate();
  if (noise.d != m.dim()) throw InvalidInput("noise dimension must match the mechanism");
  Matrix M = m.M;
  Vector b = m.b;
  return StochasticMechanism{
      [M, b, noise](const Vector& z, const Vector& u) -> Vector { return M * z + b + noise.transform(u); }, m.label,
      m.dim()};
}

Vector uniform_vector(CounterRng& rng, int d) {
  Vector u(d);
  for (int i = 0; i < d; ++i) u(i) = rng.uniform();
  return u;
}

namespace {

void guard_state(const Vector& z, std::size_t index) {
  const double norm = z.norm();
  if (!std::isfinite(norm) || norm > kDivergenceNorm) throw DivergenceError(index, norm);
}

}  // namespace

Trajectory simulate_deterministic(const Decoder& decoder, std::span<const Mechanism> schedule, const Vector& z1,
                                  int T) {
  if (T < 1) throw InvalidInput("trajectory length T must be at least 1");
  if (schedule.size() + 1 < static_cast<std::size_t>(T)) throw InvalidInput("schedule shorter than T - 1");
  const int d = decoder.latent_dim();
  if (z1.size() != d) throw InvalidInput("initial state dimension does not match the decoder");
  for (const auto& m : schedule) {
    if (mechanism_dim(m) != d) throw InvalidInput("mechanism '" + mechanism_label(m) + "' has the wrong dimension");
  }
  Trajectory out;
  out.latents.reserve(static_cast<std::size_t>(T));
  Vector z = z1;
  guard_state(z, 0);
  for (int t = 0; t < T; ++t) {
    out.latents.push_back(z);
    out.observations.push_back(decoder.decode(z));
    if (t + 1 < T) {
      const Mechanism& m = schedule[static_cast<std::size_t>(t)];
      out.mechanism_labels.push_back(mechanism_label(m));
      z = apply_mechanism(m, z);
      guard_state(z, static_cast<std::size_t>(t + 1));
    }
  }
  return out;
}

LatentSampler box_sampler(int d, double lo, double hi) {
  if (!(hi > lo)) throw InvalidInput("sampling box needs hi > lo");
  return [d, lo, hi](CounterRng& rng) {
    Vector z(d);
    for (int i = 0; i < d; ++i) z(i) = lo + (hi - lo) * rng.uniform();
    return z;
  };
}

Trajectory simulate_stochastic(const Decoder& decoder, std::span<const StochasticMechanism> schedule,
                               const LatentSampler& z1_sampler, int T, std::uint64_t seed) {
  if (T < 1) throw InvalidInput("trajectory length T must be at least 1");
  if (schedule.size() + 1 < static_cast<std::size_t>(T)) throw InvalidInput("schedule shorter than T - 1");
  const int d = decoder.latent_dim();
  for (const auto& m : schedule) {
    if (m.d != d) throw InvalidInput("stochastic mechanism '" + m.label + "' has the wrong dimension");
  }
  Trajectory out;
  out.seed = seed;
  CounterRng init(seed, 0);
  Vector z = z1_sampler(init);
  if (z.size() != d) throw InvalidInput("initial sampler returned the wrong dimension");
  guard_state(z, 0);
  for (int t = 0; t < T; ++t) {
    out.latents.push_back(z);
    out.observations.push_back(decoder.decode(z));
    if (t + 1 < T) {
      const auto& m = schedule[static_cast<std::size_t>(t)];
      CounterRng step(seed, static_cast<std::uint64_t>(t) + 1);
      out.mechanism_labels.push_back(m.label);
      z = m.apply(z, uniform_vector(step, d));
      guard_state(z, static_cast<std::size_t>(t + 1));
    }
  }
  return out;
}

namespace {

void put_number(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("trajectory CSV line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  if (trajectory.latents.empty()) throw InvalidInput("empty trajectory");
  const auto d = trajectory.latents.front().size();
  const auto n = trajectory.observations.front().size();
  out << "t";
  for (Eigen::Index i = 1; i <= d; ++i) out << ",z_" << i;
  for (Eigen::Index i = 1; i <= n; ++i) out << ",x_" << i;
  out << ",mech\n";
  for (std::size_t t = 0; t < trajectory.latents.size(); ++t) {
    out << (t + 1);
    for (Eigen::Index i = 0; i < d; ++i) {
      out << ',';
      put_number(out, trajectory.latents[t](i));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      out << ',';
      put_number(out, trajectory.observations[t](i));
    }
    out << ',' << (t < trajectory.mechanism_labels.size() ? trajectory.mechanism_labels[t] : std::string()) << '\n';
  }
}

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("trajectory CSV is empty");
  const auto header = split_csv(line);
  int d = 0;
  int n = 0;
  for (const auto& h : header) {
    if (h.rfind("z_", 0) == 0) ++d;
    if (h.rfind("x_", 0) == 0) ++n;
  }
  if (header.size() != static_cast<std::size_t>(d + n + 2) || header.front() != "t" || header.back() != "mech" ||
      d < 1 || n < 1) {
    throw InvalidInput("trajectory CSV header must be t,z_1..z_d,x_1..x_n,mech");
  }
  Trajectory out;
  std::size_t line_no = 1;
  std::vector<std::string> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw InvalidInput("trajectory CSV line " + std::to_string(line_no) + ": wrong number of columns");
    }
    Vector z(d);
    Vector x(n);
    for (int i = 0; i < d; ++i) z(i) = parse_number(cells[static_cast<std::size_t>(1 + i)], line_no);
    for (int i = 0; i < n; ++i) x(i) = parse_number(cells[static_cast<std::size_t>(1 + d + i)], line_no);
    out.latents.push_back(std::move(z));
    out.observations.push_back(std::move(x));
    labels.push_back(cells.back());
  }
  if (out.latents.empty()) throw InvalidInput("trajectory CSV has no rows");
  labels.pop_back();
  out.mechanism_labels = std::move(labels);
  return out;
}

}  // namespace mechid
