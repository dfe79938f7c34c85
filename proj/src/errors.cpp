#include "mechid/errors.hpp"

#include <sstream>

namespace mechid {

namespace {
std::string divergence_message(std::size_t step, double norm) {
  std::ostringstream os;
  os << "trajectory diverged at index " << step << " (state norm " << norm << ")";
  return os.str();
}
}  // namespace

DivergenceError::DivergenceError(std::size_t step, double norm)
    : Error(divergence_message(step, norm)), step_(step), norm_(norm) {}

}  // namespace mechid
