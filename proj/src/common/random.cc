#include "memeguard/common/random.h"

#include <cmath>
#include <numbers>

namespace memeguard {

double DeterministicRng::Normal() {
  double u1 = Uniform01();
  while (u1 <= 0.0) u1 = Uniform01();
  const double u2 = Uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace memeguard
