#include "fedcollab/mnist.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <numeric>
#include <utility>

#include "fedcollab/errors.hpp"
#include "fedcollab/rng.hpp"

namespace fedcollab {

namespace {

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) {
    throw FormatError("idx header truncated");
  }
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void append_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

std::vector<std::uint8_t> maybe_gunzip(std::vector<std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 0x1f || bytes[1] != 0x8b) {
    return bytes;
  }
  z_stream stream{};
  // 15 window bits plus 16 asks zlib for gzip framing.
  if (inflateInit2(&stream, 15 + 16) != Z_OK) {
    throw FormatError("gzip decoder init failed");
  }
  std::vector<std::uint8_t> out;
  std::uint8_t buffer[1 << 16];
  stream.next_in = bytes.data();
  stream.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    stream.next_out = buffer;
    stream.avail_out = sizeof(buffer);
    rc = inflate(&stream, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&stream);
      throw FormatError("gzip payload corrupt");
    }
    out.insert(out.end(), buffer, buffer + (sizeof(buffer) - stream.avail_out));
  }
  inflateEnd(&stream);
  return out;
}

RawImages parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  if (read_u32_be(bytes, 0) != kImagesMagic) {
    throw FormatError("not an idx image file");
  }
  const std::uint32_t count = read_u32_be(bytes, 4);
  const std::uint32_t rows = read_u32_be(bytes, 8);
  const std::uint32_t cols = read_u32_be(bytes, 12);
  if (rows != kImageSide || cols != kImageSide) {
    throw FormatError("expected 28x28 images, got " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  const std::size_t expected = 16 + static_cast<std::size_t>(count) * kImagePixels;
  if (bytes.size() < expected) {
    throw FormatError("idx image payload truncated");
  }
  RawImages images;
  images.count = count;
  images.pixels.assign(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(expected));
  return images;
}

std::vector<int> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  if (read_u32_be(bytes, 0) != kLabelsMagic) {
    throw FormatError("not an idx label file");
  }
  const std::uint32_t count = read_u32_be(bytes, 4);
  const std::size_t expected = 8 + static_cast<std::size_t>(count);
  if (bytes.size() < expected) {
    throw FormatError("idx label payload truncated");
  }
  std::vector<int> labels(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint8_t v = bytes[8 + i];
    if (v > 9) {
      throw FormatError("label out of range: " + std::to_string(v));
    }
    labels[i] = v;
  }
  return labels;
}

MnistDataset normalize(const RawImages& images, std::vector<int> labels) {
  if (images.count != labels.size()) {
    throw InputError("image/label counts differ: " + std::to_string(images.count) + " vs " +
                     std::to_string(labels.size()));
  }
  MnistDataset dataset{Tensor2D(images.count, kImagePixels), std::move(labels)};
  for (std::size_t i = 0; i < images.pixels.size(); ++i) {
    dataset.images.values()[i] = images.pixels[i] / 255.0;
  }
  return dataset;
}

MnistDataset load_mnist(const std::string& images_path, const std::string& labels_path) {
  const RawImages images = parse_idx_images(maybe_gunzip(read_file(images_path)));
  std::vector<int> labels = parse_idx_labels(maybe_gunzip(read_file(labels_path)));
  return normalize(images, std::move(labels));
}

std::vector<Shard> partition_iid(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k == 0) {
    throw InputError("cannot partition into zero shards");
  }
  if (k > n) {
    throw InputError("more shards than examples: " + std::to_string(k) + " > " +
                     std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<Shard> shards(k);
  for (std::size_t i = 0; i < k; ++i) {
    shards[i].worker_id = i;
    shards[i].indices.reserve(n / k + 1);
  }
  for (std::size_t i = 0; i < n; ++i) {
    shards[i % k].indices.push_back(order[i]);
  }
  return shards;
}

MnistDataset take_subset(const MnistDataset& dataset, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(order, rng);
  if (n < order.size()) {
    order.resize(n);
  }
  return select(dataset, order);
}

MnistDataset select(const MnistDataset& dataset, const std::vector<std::size_t>& indices) {
  MnistDataset out{Tensor2D(indices.size(), dataset.images.cols()),
                   std::vector<int>(indices.size())};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= dataset.size()) {
      throw RangeError("row index out of range: " + std::to_string(src));
    }
    std::memcpy(out.images.row_ptr(i), dataset.images.row_ptr(src),
                dataset.images.cols() * sizeof(double));
    out.labels[i] = dataset.labels[src];
  }
  return out;
}

std::vector<std::uint8_t> serialize_idx_images(const RawImages& images) {
  if (images.pixels.size() != images.count * kImagePixels) {
    throw InputError("pixel buffer does not match image count");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  append_u32_be(out, kImagesMagic);
  append_u32_be(out, static_cast<std::uint32_t>(images.count));
  append_u32_be(out, kImageSide);
  append_u32_be(out, kImageSide);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> serialize_idx_labels(const std::vector<int>& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  append_u32_be(out, kLabelsMagic);
  append_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  for (int label : labels) {
    if (label < 0 || label > 9) {
      throw InputError("label out of range: " + std::to_string(label));
    }
    out.push_back(static_cast<std::uint8_t>(label));
  }
  return out;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot open for writing: " + path);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw InputError("write failed: " + path);
  }
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open: " + path);
  }
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

}  // namespace fedcollab
