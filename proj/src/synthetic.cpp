#include "motiondiff/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "motiondiff/errors.hpp"

namespace motiondiff {

void motion_direction(int cond_id, std::size_t num_conditions, double& dx, double& dy) {
  if (cond_id < 0 || static_cast<std::size_t>(cond_id) >= num_conditions) {
    throw IndexError("motion_direction: unknown condition " + std::to_string(cond_id));
  }
  const double angle = 2.0 * std::numbers::pi * cond_id / static_cast<double>(num_conditions);
  dx = std::cos(angle);
  dy = std::sin(angle);
  // keep axis-aligned classes exact
  if (std::abs(dx) < 1e-12) dx = 0.0;
  if (std::abs(dy) < 1e-12) dy = 0.0;
}

Tensor render_blob_video(const ModelConfig& cfg, double x0, double y0, double vx, double vy, double sigma) {
  const std::size_t c = cfg.channels, n = cfg.frames, h = cfg.height, w = cfg.width;
  std::vector<double> values(c * n * h * w);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t f = 0; f < n; ++f) {
    const double cx = x0 + vx * static_cast<double>(f);
    const double cy = y0 + vy * static_cast<double>(f);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double ddx = static_cast<double>(x) - cx;
        const double ddy = static_cast<double>(y) - cy;
        const double blob = std::exp(-(ddx * ddx + ddy * ddy) * inv);
        for (std::size_t k = 0; k < c; ++k) {
          const double gain = 1.0 - 0.5 * static_cast<double>(k) / static_cast<double>(c);
          values[((k * n + f) * h + y) * w + x] = gain * (2.0 * blob - 1.0);
        }
      }
    }
  }
  return Tensor(Shape{1, c, n, h, w}, std::move(values));
}

std::vector<SyntheticSample> gen_synthetic_dataset(int count, const ModelConfig& cfg, std::uint64_t seed) {
  if (count < 1) throw ContractError("gen_synthetic_dataset: count must be >= 1");
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_class(0, static_cast<int>(cfg.num_conditions) - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double size = static_cast<double>(std::min(cfg.height, cfg.width));
  const double sigma = std::max(1.0, size / 8.0);
  const double base_speed = size / 16.0;

  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SyntheticSample s;
    s.cond_id = pick_class(rng);
    double dx = 0.0, dy = 0.0;
    motion_direction(s.cond_id, cfg.num_conditions, dx, dy);
    const double speed = base_speed * (1.0 + 0.2 * unit(rng));
    const double travel = speed * static_cast<double>(cfg.frames - 1);
    const double jitter_x = 0.1 * size * unit(rng);
    const double jitter_y = 0.1 * size * unit(rng);
    s.velocity_x = speed * dx;
    s.velocity_y = speed * dy;
    s.start_x = 0.5 * (static_cast<double>(cfg.width) - 1.0) - 0.5 * travel * dx + jitter_x;
    s.start_y = 0.5 * (static_cast<double>(cfg.height) - 1.0) - 0.5 * travel * dy + jitter_y;
    s.video = render_blob_video(cfg, s.start_x, s.start_y, s.velocity_x, s.velocity_y, sigma);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace motiondiff
