#pragma once

#include <vector>

#include "motiondiff/flow.hpp"
#include "motiondiff/tensor.hpp"

namespace motiondiff {

/// Per-pixel ratio of the long-range flow projected onto the adjacent flow.
struct DistanceMap {
  Tensor d;  // [h, w]
};

// Adjacent flow shorter than this (pixels) makes the ratio meaningless.
inline constexpr double kMinFlowNorm = 1e-3;

/// D = (V_to_last . V_to_next) / |V_to_next|^2, and 1 wherever
/// |V_to_next| < kMinFlowNorm.
DistanceMap distance_map(const FlowField& to_last, const FlowField& to_next);

/// Per-pixel step multiplier: clamp(D / median(D), 0.5, 1.5). All ones when
/// the median is not positive.
Tensor step_weights(const DistanceMap& d);

/// Frame halfway between i_t and i_t1. Both frames are forward-splatted with
/// bilinear weights, i_t along +0.5 w(D) V and i_t1 along -0.5 w(D) V, then
/// blended; pixels nothing lands on take the mean of the two sources.
Tensor synthesize_midframe(const Tensor& i_t, const Tensor& i_t1, const FlowField& to_next,
                           const DistanceMap& d);

/// N frames -> 2N-1 frames. Originals sit at even 0-based slots untouched;
/// slot 2t+1 is built from the triplet (frame t, last frame, frame t+1).
std::vector<Tensor> interpolate_sequence(const std::vector<Tensor>& frames, const FlowConfig& cfg = {});

/// Peak signal-to-noise ratio in dB for signals in [0, 1]; +inf for identical inputs.
double psnr(const Tensor& a, const Tensor& b);

}  // namespace motiondiff
