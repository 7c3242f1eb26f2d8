#pragma once

#include <cstdint>

#include "fedcollab/mnist.hpp"

namespace fedcollab {

// Procedurally drawn digit-like images. Each class is a fixed arrangement
// of strokes; every sample perturbs that arrangement with a global shift,
// endpoint jitter, a brightness factor and pixel noise, so classes overlap
// without becoming unlearnable. Output is byte-quantized so a round trip
// through the on-disk image format is exact.
struct SyntheticData {
  RawImages images;
  std::vector<int> labels;
};

/// Generates n samples with labels cycling 0..9. The same (n, seed) pair
/// always yields identical bytes.
SyntheticData make_synthetic_digits(std::size_t n, std::uint64_t seed);

/// Convenience wrapper over normalize().
MnistDataset to_dataset(const SyntheticData& data);

}  // namespace fedcollab
