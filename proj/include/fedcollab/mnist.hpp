#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedcollab/tensor.hpp"

namespace fedcollab {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

// Normalized dataset: N x 784 pixels in [0, 1] and one class label per row.
struct MnistDataset {
  Tensor2D images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// One worker's slice of a dataset, kept as indices into the parent.
struct Shard {
  std::size_t worker_id = 0;
  std::vector<std::size_t> indices;
};

// Raw image payload straight out of an IDX file (28 x 28 bytes per image).
struct RawImages {
  std::size_t count = 0;
  std::vector<std::uint8_t> pixels;  // count * kImagePixels bytes
};

/// Inflates gzip-wrapped bytes (detected by the 1f 8b prefix); anything else
/// passes through untouched.
std::vector<std::uint8_t> maybe_gunzip(std::vector<std::uint8_t> bytes);

/// Parses an IDX image file (magic 0x00000803, dims N, 28, 28). Throws
/// FormatError on a wrong magic, wrong image size or truncated payload.
RawImages parse_idx_images(const std::vector<std::uint8_t>& bytes);

/// Parses an IDX label file (magic 0x00000801, dim N, one byte per label).
/// Labels above 9 and truncated payloads throw FormatError.
std::vector<int> parse_idx_labels(const std::vector<std::uint8_t>& bytes);

/// Maps raw pixels to [0, 1] (v / 255) and pairs them with their labels.
MnistDataset normalize(const RawImages& images, std::vector<int> labels);

/// Reads an image/label file pair (gzip transparently handled).
MnistDataset load_mnist(const std::string& images_path, const std::string& labels_path);

/// Deals a seeded shuffle of [0, n) round-robin into k disjoint shards whose
/// sizes differ by at most one. Throws InputError when k == 0 or k > n.
std::vector<Shard> partition_iid(std::size_t n, std::size_t k, std::uint64_t seed);

/// First n examples of a seeded shuffle, as a new dataset. n larger than the
/// dataset keeps everything (still shuffled).
MnistDataset take_subset(const MnistDataset& dataset, std::size_t n, std::uint64_t seed);

/// Gathers the given rows into a new dataset.
MnistDataset select(const MnistDataset& dataset, const std::vector<std::size_t>& indices);

// IDX serializers, matching the parsers bit for bit.
std::vector<std::uint8_t> serialize_idx_images(const RawImages& images);
std::vector<std::uint8_t> serialize_idx_labels(const std::vector<int>& labels);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace fedcollab
