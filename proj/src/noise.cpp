#include "mechid/noise.hpp"

#include "mechid/errors.hpp"
#include "mechid/rng.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mechid {

std::string to_string(NoiseFamily family) {
  switch (family) {
    case NoiseFamily::generalized_laplace:
      return "generalized-laplace";
    case NoiseFamily::gaussian:
      return "gaussian";
    case NoiseFamily::uniform:
      return "uniform";
  }
  return "unknown";
}

NoiseFamily parse_noise_family(const std::string& name) {
  if (name == "generalized-laplace" || name == "laplace") return NoiseFamily::generalized_laplace;
  if (name == "gaussian") return NoiseFamily::gaussian;
  if (name == "uniform") return NoiseFamily::uniform;
  throw InvalidInput("unknown noise family '" + name + "'");
}

void NoiseSpec::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidInput("noise alpha must be positive");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidInput("noise scale must be positive");
  if (d < 1) throw InvalidInput("noise dimension must be at least 1");
}

double NoiseSpec::cdf(double v) const {
  switch (family) {
    case NoiseFamily::generalized_laplace: {
      const double w = std::pow(std::abs(v) / scale, alpha);
      const double tail = 0.5 * boost::math::gamma_q(1.0 / alpha, w);
      return v >= 0.0 ? 1.0 - tail : tail;
    }
    case NoiseFamily::gaussian:
      return 0.5 * boost::math::erfc(-v / (scale * std::numbers::sqrt2));
    case NoiseFamily::uniform:
      return std::clamp((v + scale) / (2.0 * scale), 0.0, 1.0);
  }
  return 0.0;
}

double NoiseSpec::inverse_cdf(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw InvalidInput("inverse_cdf needs u in (0, 1)");
  switch (family) {
    case NoiseFamily::generalized_laplace: {
      // Upper-tail form keeps precision as u approaches 0 or 1.
      const double tail = u < 0.5 ? 2.0 * u : 2.0 * (1.0 - u);
      if (tail >= 1.0) return 0.0;
      double magnitude = 0.0;
      if (alpha == 1.0) {
        magnitude = -scale * std::log(tail);
      } else if (alpha == 2.0) {
        magnitude = scale * boost::math::erfc_inv(tail);
      } else {
        magnitude = scale * std::pow(boost::math::gamma_q_inv(1.0 / alpha, tail), 1.0 / alpha);
      }
      return u < 0.5 ? -magnitude : magnitude;
    }
    case NoiseFamily::gaussian:
      return -scale * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
    case NoiseFamily::uniform:
      return scale * (2.0 * u - 1.0);
  }
  return 0.0;
}

double NoiseSpec::variance() const {
  switch (family) {
    case NoiseFamily::generalized_laplace:
      return scale * scale * std::tgamma(3.0 / alpha) / std::tgamma(1.0 / alpha);
    case NoiseFamily::gaussian:
      return scale * scale;
    case NoiseFamily::uniform:
      return scale * scale / 3.0;
  }
  return 0.0;
}

Vector NoiseSpec::transform(const Vector& u) const {
  Vector v(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) v(i) = inverse_cdf(u(i));
  return v;
}

Matrix sample_generalized_laplace(const NoiseSpec& spec, int count, std::uint64_t seed) {
  spec.validate();
  if (spec.family != NoiseFamily::generalized_laplace) {
    throw InvalidInput("sample_generalized_laplace needs the generalized-laplace family");
  }
  if (count < 1) throw InvalidInput("sample count must be at least 1");
  Matrix out(count, spec.d);
  const double inv_alpha = 1.0 / spec.alpha;
  for (int r = 0; r < count; ++r) {
    CounterRng rng(seed, static_cast<std::uint64_t>(r));
    std::gamma_distribution<double> gamma(inv_alpha, 1.0);
    for (int k = 0; k < spec.d; ++k) {
      const double magnitude = spec.scale * std::pow(gamma(rng), inv_alpha);
      out(r, k) = (rng() >> 63) != 0 ? magnitude : -magnitude;
    }
  }
  return out;
}

Matrix sample_noise(const NoiseSpec& spec, int count, std::uint64_t seed) {
  if (spec.family == NoiseFamily::generalized_laplace) return sample_generalized_laplace(spec, count, seed);
  spec.validate();
  if (count < 1) throw InvalidInput("sample count must be at least 1");
  Matrix out(count, spec.d);
  for (int r = 0; r < count; ++r) {
    CounterRng rng(seed, static_cast<std::uint64_t>(r));
    for (int k = 0; k < spec.d; ++k) out(r, k) = spec.inverse_cdf(rng.uniform());
  }
  return out;
}

}  // namespace mechid
