#pragma once

#include <functional>
#include <vector>

#include "motiondiff/tensor.hpp"

namespace motiondiff {

/// Per-step noise levels. Public accessors take 1-based timesteps t in [1, T];
/// alpha_bar_at(0) is defined as 1.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double beta_at(int t) const;
  double alpha_at(int t) const;
  double alpha_bar_at(int t) const;
};

/// Linear betas between the two endpoints (inclusive). Throws ConfigError
/// unless T >= 1 and 0 < beta_start <= beta_end < 1.
NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end);

/// Closed-form noising: sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

/// Mean squared error between true and predicted noise.
Tensor diffusion_loss(const Tensor& eps_true, const Tensor& eps_pred);

/// Deterministic DDIM update from t to t_prev using cumulative alphas.
Tensor ddim_step(const Tensor& z_t, const Tensor& eps_pred, int t, int t_prev,
                 const NoiseSchedule& sched);

/// Timesteps visited by a `sampling_steps`-step DDIM run: uniform stride
/// T / steps, largest first. The step after the last entry goes to t = 0.
std::vector<int> ddim_timesteps(int total_steps, int sampling_steps);

/// Noise predictor: (z_t, t, cond_id) -> eps_theta.
using Denoiser = std::function<Tensor(const Tensor&, int, int)>;

/// Runs the DDIM ladder from z_T down to an estimate of z_0. No randomness is
/// drawn; the result depends only on the arguments.
Tensor ddim_sample(const Denoiser& denoiser, const Tensor& z_T, int sampling_steps, int cond_id,
                   const NoiseSchedule& sched);

}  // namespace motiondiff
