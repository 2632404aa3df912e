#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "motiondiff/tensor.hpp"

namespace motiondiff {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Smooth rectifier 0.5 * (x + sqrt(x^2 + 0.01)), built from recorded ops.
inline Tensor smooth_relu(const Tensor& x) {
  const Tensor shifted = add(square(x), Tensor(x.shape(), 0.01));
  return scale(add(x, sqrt(shifted)), 0.5);
}

/// Gaussian init with standard deviation `stddev`.
inline Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = normal(rng);
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace motiondiff
