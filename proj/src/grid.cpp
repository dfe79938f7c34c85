#include "mechid/grid.hpp"

#include "mechid/errors.hpp"

#include <array>

namespace mechid {

namespace {

constexpr std::array<int, 16> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double radical_inverse(int base, long index) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

}  // namespace

std::vector<Vector> low_discrepancy_points(int d, int count, double lo, double hi) {
  if (d < 1 || d > static_cast<int>(kPrimes.size())) throw InvalidInput("grid dimension out of range [1, 16]");
  if (count < 1) throw InvalidInput("grid needs at least one point");
  if (!(hi > lo)) throw InvalidInput("grid box needs hi > lo");
  std::vector<Vector> points;
  points.reserve(static_cast<std::size_t>(count));
  points.push_back(Vector::Constant(d, 0.5 * (lo + hi)));
  for (long i = 1; static_cast<int>(points.size()) < count; ++i) {
    Vector z(d);
    for (int k = 0; k < d; ++k) z(k) = lo + (hi - lo) * radical_inverse(kPrimes[static_cast<std::size_t>(k)], i);
    points.push_back(std::move(z));
  }
  return points;
}

std::vector<Vector> GridSpec::generate(int d) const { return low_discrepancy_points(d, points, lo, hi); }

}  // namespace mechid
