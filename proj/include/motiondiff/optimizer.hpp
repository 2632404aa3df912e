#pragma once

#include <vector>

#include "motiondiff/nn.hpp"

namespace motiondiff {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

/// Adam over a fixed list of parameter tensors. Parameters without an
/// accumulated gradient are treated as having a zero gradient.
class Adam {
 public:
  Adam(NamedTensors params, AdamConfig cfg);

  void step();
  void zero_grad();

  long steps_taken() const { return steps_; }
  const NamedTensors& params() const { return params_; }

  /// First/second moment buffers, named "adam.m.<param>" / "adam.v.<param>".
  NamedTensors moments() const;
  /// Restores moments (matched by name) and the step counter.
  void restore(const NamedTensors& moments, long steps);

 private:
  NamedTensors params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long steps_ = 0;
};

}  // namespace motiondiff
