#pragma once

#include <cstdint>
#include <limits>

namespace mechid {

std::uint64_t mix64(std::uint64_t x);

/// Derives an independent 64-bit key from a seed and a stream index.
std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream);

/// Counter-based random stream. The i-th output is a pure function of
/// (seed, stream, i), so streams for different steps or trials can be
/// generated in any order, on any thread, with identical results.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(derive_key(seed, stream)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on the open interval (0, 1).
  double uniform();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mechid
