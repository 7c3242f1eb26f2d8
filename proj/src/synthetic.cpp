#include "fedcollab/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "fedcollab/rng.hpp"

namespace fedcollab {

namespace {

struct Stroke {
  double x1, y1, x2, y2;
  double thickness;
  double intensity;
};

std::vector<Stroke> class_layout(int cls) {
  // Fixed per-class seed: layouts are a property of the class, not of the
  // dataset seed, so train and test sets share the same class geometry.
  Rng rng(static_cast<std::uint64_t>(cls) * 2654435761ULL + 12345ULL);
  std::vector<Stroke> strokes(4);
  for (auto& s : strokes) {
    s.x1 = rng.uniform(5.0, 23.0);
    s.y1 = rng.uniform(5.0, 23.0);
    s.x2 = rng.uniform(5.0, 23.0);
    s.y2 = rng.uniform(5.0, 23.0);
    s.thickness = rng.uniform(1.1, 1.8);
    s.intensity = rng.uniform(0.7, 1.0);
  }
  return strokes;
}

double segment_distance(double px, double py, const Stroke& s) {
  const double dx = s.x2 - s.x1;
  const double dy = s.y2 - s.y1;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = std::clamp(((px - s.x1) * dx + (py - s.y1) * dy) / len2, 0.0, 1.0);
  }
  const double cx = s.x1 + t * dx;
  const double cy = s.y1 + t * dy;
  return std::hypot(px - cx, py - cy);
}

}  // namespace

SyntheticData make_synthetic_digits(std::size_t n, std::uint64_t seed) {
  std::vector<std::vector<Stroke>> layouts(10);
  for (int cls = 0; cls < 10; ++cls) {
    layouts[cls] = class_layout(cls);
  }

  SyntheticData data;
  data.images.count = n;
  data.images.pixels.assign(n * kImagePixels, 0);
  data.labels.resize(n);

  std::vector<double> canvas(kImagePixels);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 10);
    data.labels[i] = cls;
    Rng rng(derive_seed(seed, i));

    const double shift_x = rng.uniform(-1.2, 1.2);
    const double shift_y = rng.uniform(-1.2, 1.2);
    const double brightness = rng.uniform(0.85, 1.15);

    std::fill(canvas.begin(), canvas.end(), 0.0);
    for (const Stroke& base : layouts[cls]) {
      Stroke s = base;
      s.x1 += shift_x + rng.uniform(-0.7, 0.7);
      s.y1 += shift_y + rng.uniform(-0.7, 0.7);
      s.x2 += shift_x + rng.uniform(-0.7, 0.7);
      s.y2 += shift_y + rng.uniform(-0.7, 0.7);
      const double sigma = 0.55 * s.thickness;
      const double inv = 1.0 / (2.0 * sigma * sigma);
      // Only pixels near the stroke can light up; skip the rest.
      const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(s.x1, s.x2))) - 3);
      const int x_hi = std::min<int>(kImageSide - 1,
                                     static_cast<int>(std::ceil(std::max(s.x1, s.x2))) + 3);
      const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(s.y1, s.y2))) - 3);
      const int y_hi = std::min<int>(kImageSide - 1,
                                     static_cast<int>(std::ceil(std::max(s.y1, s.y2))) + 3);
      for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
          const double d = segment_distance(x, y, s);
          canvas[static_cast<std::size_t>(y) * kImageSide + x] +=
              s.intensity * brightness * std::exp(-d * d * inv);
        }
      }
    }

    std::uint8_t* pixels = data.images.pixels.data() + i * kImagePixels;
    for (std::size_t p = 0; p < kImagePixels; ++p) {
      const double noisy = canvas[p] + rng.uniform(-0.1, 0.1);
      const double clamped = std::clamp(noisy, 0.0, 1.0);
      pixels[p] = static_cast<std::uint8_t>(std::llround(255.0 * clamped));
    }
  }
  return data;
}

MnistDataset to_dataset(const SyntheticData& data) {
  return normalize(data.images, data.labels);
}

}  // namespace fedcollab
