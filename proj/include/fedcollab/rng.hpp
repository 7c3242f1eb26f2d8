#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace fedcollab {

/// Deterministic pseudo-random generator (xoshiro256**, seeded via
/// splitmix64). Hand-rolled so that streams are bit-identical across
/// platforms and standard-library versions; every simulation component
/// draws from an explicitly seeded instance.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). Rejection sampling, unbiased. n must be > 0.
  std::uint64_t bounded(std::uint64_t n);

 private:
  std::uint64_t state_[4];
};

/// Derives an independent stream seed from a master seed. Used to give
/// each worker, pass and query its own reproducible randomness.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// In-place Fisher-Yates shuffle driven by rng.bounded(). Same caveat as
/// Rng itself: the point is a reproducible order, not std::shuffle's.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.bounded(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace fedcollab
