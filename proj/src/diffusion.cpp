#include "motiondiff/diffusion.hpp"

#include <cmath>
#include <string>

#include "motiondiff/errors.hpp"

namespace motiondiff {

namespace {

void check_timestep(const NoiseSchedule& sched, int t, int lowest) {
  if (t < lowest || t > sched.steps) {
    throw IndexError("timestep " + std::to_string(t) + " outside [" + std::to_string(lowest) + ", " +
                     std::to_string(sched.steps) + "]");
  }
}

}  // namespace

double NoiseSchedule::beta_at(int t) const {
  check_timestep(*this, t, 1);
  return beta[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_at(int t) const {
  check_timestep(*this, t, 1);
  return alpha[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar_at(int t) const {
  check_timestep(*this, t, 0);
  return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule build_linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("noise schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("noise schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(static_cast<std::size_t>(steps));
  s.alpha.resize(s.beta.size());
  s.alpha_bar.resize(s.beta.size());
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    const auto k = static_cast<std::size_t>(i);
    s.beta[k] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[k] = 1.0 - s.beta[k];
    running *= s.alpha[k];
    s.alpha_bar[k] = running;
  }
  return s;
}

Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  if (z0.shape() != eps.shape()) {
    throw DimensionError("forward_diffuse: z0 " + shape_to_string(z0.shape()) + " vs eps " +
                         shape_to_string(eps.shape()));
  }
  if (t < 1) throw IndexError("forward_diffuse: timestep " + std::to_string(t) + " < 1");
  const double abar = sched.alpha_bar_at(t);
  return add(scale(z0, std::sqrt(abar)), scale(eps, std::sqrt(1.0 - abar)));
}

Tensor diffusion_loss(const Tensor& eps_true, const Tensor& eps_pred) {
  if (eps_true.shape() != eps_pred.shape()) {
    throw DimensionError("diffusion_loss: " + shape_to_string(eps_true.shape()) + " vs " +
                         shape_to_string(eps_pred.shape()));
  }
  return mean(square(sub(eps_pred, eps_true)));
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps_pred, int t, int t_prev,
                 const NoiseSchedule& sched) {
  if (t <= t_prev || t_prev < 0) {
    throw ContractError("ddim_step: need t > t_prev >= 0, got t=" + std::to_string(t) +
                        ", t_prev=" + std::to_string(t_prev));
  }
  if (z_t.shape() != eps_pred.shape()) {
    throw DimensionError("ddim_step: z_t " + shape_to_string(z_t.shape()) + " vs eps " +
                         shape_to_string(eps_pred.shape()));
  }
  const double abar_t = sched.alpha_bar_at(t);
  const double abar_prev = sched.alpha_bar_at(t_prev);
  // sqrt(abar_prev) * (z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t) + sqrt(1 - abar_prev) eps,
  // regrouped as c_z z_t + c_eps eps so both degenerate cases come out exact.
  const double ratio = std::sqrt(abar_prev / abar_t);
  const double c_eps = std::sqrt(1.0 - abar_prev) - std::sqrt(1.0 - abar_t) * ratio;
  return add(scale(z_t, ratio), scale(eps_pred, c_eps));
}

std::vector<int> ddim_timesteps(int total_steps, int sampling_steps) {
  if (sampling_steps < 1) throw ConfigError("ddim: sampling steps must be >= 1");
  if (sampling_steps > total_steps) {
    throw ConfigError("ddim: sampling steps " + std::to_string(sampling_steps) + " exceed T=" +
                      std::to_string(total_steps));
  }
  const int stride = total_steps / sampling_steps;
  std::vector<int> ladder;
  ladder.reserve(static_cast<std::size_t>(sampling_steps));
  for (int i = 0; i < sampling_steps; ++i) ladder.push_back(total_steps - i * stride);
  return ladder;
}

Tensor ddim_sample(const Denoiser& denoiser, const Tensor& z_T, int sampling_steps, int cond_id,
                   const NoiseSchedule& sched) {
  const auto ladder = ddim_timesteps(sched.steps, sampling_steps);
  NoGradGuard no_grad;
  Tensor z = z_T;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const int t = ladder[i];
    const int t_prev = i + 1 < ladder.size() ? ladder[i + 1] : 0;
    const Tensor eps = denoiser(z, t, cond_id);
    z = ddim_step(z, eps, t, t_prev, sched);
  }
  return z;
}

}  // namespace motiondiff
