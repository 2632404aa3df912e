#pragma once

// Helpers shared by the test binaries: random tensors, smooth test images and
// small numeric utilities. Nothing here calls into the library's math; the
// oracles in the tests are written against plain loops.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "motiondiff/tensor.hpp"

namespace support {

inline motiondiff::Tensor random_tensor(motiondiff::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                        double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> values(motiondiff::shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return motiondiff::Tensor(std::move(shape), std::move(values));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

/// Smooth grayscale pattern in [0, 1] sampled at (x - dx, y - dy): moving the
/// pattern by (dx, dy) pixels is an exact analytic shift.
inline double smooth_pattern(double x, double y, double w, double h) {
  const double pi = 3.14159265358979323846;
  return 0.5 + 0.2 * std::sin(2.0 * pi * x / w * 1.5 + 0.3) * std::cos(2.0 * pi * y / h + 0.7) +
         0.15 * std::cos(2.0 * pi * (x + 0.5 * y) / w * 1.0 + 1.1);
}

inline motiondiff::Tensor smooth_image(std::size_t h, std::size_t w, double dx = 0.0, double dy = 0.0) {
  std::vector<double> values(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      values[y * w + x] = smooth_pattern(static_cast<double>(x) - dx, static_cast<double>(y) - dy,
                                         static_cast<double>(w), static_cast<double>(h));
    }
  }
  return motiondiff::Tensor(motiondiff::Shape{h, w}, std::move(values));
}

/// Gaussian blob of width `sigma` centred at (cx, cy) on a 0.1 background,
/// peak 0.9.
inline motiondiff::Tensor blob_image(std::size_t h, std::size_t w, double cx, double cy, double sigma) {
  std::vector<double> values(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      values[y * w + x] = 0.1 + 0.8 * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  }
  return motiondiff::Tensor(motiondiff::Shape{h, w}, std::move(values));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("motiondiff_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
