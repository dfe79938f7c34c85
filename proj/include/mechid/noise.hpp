#pragma once

#include "mechid/types.hpp"

#include <cstdint>
#include <string>

namespace mechid {

enum class NoiseFamily { generalized_laplace, gaussian, uniform };

std::string to_string(NoiseFamily family);
NoiseFamily parse_noise_family(const std::string& name);

/// Per-component noise law.
///   generalized_laplace: density proportional to exp(-|v / scale|^alpha)
///   gaussian:            N(0, scale^2)
///   uniform:             U(-scale, scale)
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::generalized_laplace;
  double alpha = 1.0;
  double scale = 1.0;
  int d = 1;

  void validate() const;

  double cdf(double v) const;
  /// Quantile function; u must lie in (0, 1).
  double inverse_cdf(double u) const;
  double variance() const;
  /// Componentwise inverse CDF of a uniform vector.
  Vector transform(const Vector& u) const;
};

/// count x d matrix of i.i.d. generalized-Laplace draws, generated as
/// sign * scale * Gamma(1/alpha, 1)^(1/alpha). Row r uses stream (seed, r).
Matrix sample_generalized_laplace(const NoiseSpec& spec, int count, std::uint64_t seed);

/// Draws for any family; generalized Laplace routes to the Gamma transform,
/// the others to their quantile functions.
Matrix sample_noise(const NoiseSpec& spec, int count, std::uint64_t seed);

}  // namespace mechid
