#pragma once

#include "mechid/types.hpp"

#include <vector>

namespace mechid {

/// Deterministic sampling box for pointwise checks.
struct GridSpec {
  int points = 256;
  double lo = -2.0;
  double hi = 2.0;

  std::vector<Vector> generate(int d) const;
};

/// Halton points in [lo, hi]^d. The first point is the box centre; the rest
/// follow the Halton sequence from index 1.
std::vector<Vector> low_discrepancy_points(int d, int count, double lo, double hi);

}  // namespace mechid
