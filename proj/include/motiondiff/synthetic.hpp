#pragma once

#include <cstdint>
#include <vector>

#include "motiondiff/motion_module.hpp"
#include "motiondiff/tensor.hpp"

namespace motiondiff {

/// One training clip: a Gaussian blob translating at constant velocity.
struct SyntheticSample {
  Tensor video;  // [1, c, N, h, w], values in [-1, 1]
  int cond_id = 0;
  double start_x = 0.0;
  double start_y = 0.0;
  double velocity_x = 0.0;  // pixels per frame
  double velocity_y = 0.0;
};

/// Unit direction of motion class `cond_id`: class k moves at angle
/// 2*pi*k/num_conditions, so class 0 moves right (+x) and, with four
/// classes, 1 moves down, 2 left and 3 up.
void motion_direction(int cond_id, std::size_t num_conditions, double& dx, double& dy);

/// Renders a blob of width `sigma` centred at (x0 + t vx, y0 + t vy) in frame t.
Tensor render_blob_video(const ModelConfig& cfg, double x0, double y0, double vx, double vy, double sigma);

/// Deterministic per seed. Each clip draws its class, speed and a small jitter
/// of the start point; the path is centred in the frame.
std::vector<SyntheticSample> gen_synthetic_dataset(int count, const ModelConfig& cfg, std::uint64_t seed);

}  // namespace motiondiff
