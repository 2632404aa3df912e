#pragma once

#include "motiondiff/tensor.hpp"

namespace motiondiff {

/// Per-pixel displacement in pixels; u is horizontal, v vertical. Both [h, w].
struct FlowField {
  Tensor u;
  Tensor v;
};

struct FlowConfig {
  int levels = 3;
  int iterations = 100;   // Horn-Schunck sweeps per pyramid level
  double smoothness = 0.1;  // alpha; the regulariser weight is alpha^2
};

/// Coarse-to-fine Horn-Schunck flow from frame `a` to frame `b` ([h, w]
/// grayscale). At every level `b` is warped towards `a` with the current
/// estimate and an increment is solved around it. Deterministic.
FlowField estimate_flow(const Tensor& a, const Tensor& b, const FlowConfig& cfg = {});

}  // namespace motiondiff
