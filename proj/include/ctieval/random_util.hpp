// Deterministic randomness helpers. std::shuffle and the std distributions
// are implementation-defined, which would break cross-platform
// reproducibility of splits, few-shot selection and bootstrap intervals,
// so index drawing is pinned to mt19937_64 modulo reduction.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ctieval {

inline size_t det_index(std::mt19937_64& rng, size_t bound) {
  return static_cast<size_t>(rng() % bound);
}

template <typename T>
void det_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = det_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ctieval
