#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace memeguard {

// Seeded generator whose derived operations are bit-reproducible across
// standard libraries. std::uniform_int_distribution and std::shuffle are
// implementation-defined, so they are avoided here.
class DeterministicRng {
 public:
  explicit DeterministicRng(uint64_t seed) : engine_(seed) {}

  uint64_t Next() { return engine_(); }

  // Uniform integer in [0, bound), bound > 0, by rejection sampling.
  uint64_t Below(uint64_t bound) {
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % bound;
  }

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(Below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Gaussian via Box-Muller on the raw engine output.
  double Normal();

  double Uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace memeguard
