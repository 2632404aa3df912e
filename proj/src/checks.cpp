#include "motiondiff/checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "motiondiff/contrastive.hpp"
#include "motiondiff/diffusion.hpp"
#include "motiondiff/gradcheck.hpp"
#include "motiondiff/motion_module.hpp"
#include "motiondiff/trainer.hpp"

namespace motiondiff {

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kExactTolerance = 1e-12;

std::vector<Tensor> tensors_of(const NamedTensors& named) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

CheckResult full_pipeline_gradient(const TrainConfig& base) {
  TrainConfig cfg = base;
  cfg.model.zero_init_out = false;
  const Model model = init_model(cfg);
  const NoiseSchedule sched = build_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
  std::mt19937_64 rng(cfg.seed + 17);
  const Tensor z0 = random_normal(cfg.model.latent_shape(), 0.5, rng);
  const Tensor eps = draw_video_noise(cfg.model.latent_shape(), rng);
  const int t = std::max(1, cfg.timesteps / 2);
  const Tensor z_t = forward_diffuse(z0, t, eps, sched);
  const auto loss = [&] {
    const Tensor pred = predict_noise(model, z_t, t, 0);
    const Tensor l_con = contrastive_loss(adapt_frames(pred, model.adapter), cfg.contrastive());
    return combined_loss(diffusion_loss(eps, pred), l_con, cfg.lambda_diff, cfg.lambda_con);
  };
  const double err = finite_diff_check(loss, tensors_of(model.trainable()), 1e-5);
  return {"grad.full_pipeline", err < kGradTolerance, err, kGradTolerance};
}

CheckResult attention_gradient(const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed + 29);
  const std::size_t frames = cfg.model.frames;
  const std::size_t inner = cfg.model.inner_dim;
  ModelConfig mc = cfg.model;
  mc.zero_init_out = false;
  const MotionModuleParams motion = init_motion_module(mc, rng);
  const Tensor z = random_normal({3, frames, inner}, 1.0, rng).set_requires_grad(true);
  const auto& block = motion.blocks.front();
  const auto loss = [&] {
    const Tensor a = masked_attention(z, versatile_mask(static_cast<int>(frames)), block.versatile);
    const Tensor b = masked_attention(a, sparse_causal_mask(static_cast<int>(frames)), block.sparse_causal);
    return mean(square(b));
  };
  std::vector<Tensor> params{z};
  for (const auto& t : tensors_of(motion.named())) params.push_back(t);
  const double err = finite_diff_check(loss, params, 1e-5);
  return {"grad.masked_attention", err < kGradTolerance, err, kGradTolerance};
}

CheckResult mask_check(const char* name, bool sparse) {
  double violations = 0.0;
  for (int n = 1; n <= 16; ++n) {
    const AttentionMask mask = sparse ? sparse_causal_mask(n) : versatile_mask(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const bool expected = !sparse || (i == 0 ? j == 0 : j == i - 1);
        if (mask.allows(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) != expected) violations += 1.0;
      }
    }
  }
  return {name, violations == 0.0, violations, 0.0};
}

CheckResult schedule_check(const TrainConfig& cfg) {
  const NoiseSchedule s = build_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
  double worst = 0.0;
  double product = 1.0;
  for (int t = 1; t <= s.steps; ++t) {
    product *= 1.0 - s.beta_at(t);
    worst = std::max(worst, std::abs(product - s.alpha_bar_at(t)));
  }
  return {"schedule.alpha_bar", worst <= kExactTolerance, worst, kExactTolerance};
}

CheckResult ddim_identity_check(const TrainConfig& cfg) {
  const NoiseSchedule s = build_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
  std::mt19937_64 rng(cfg.seed + 41);
  const Tensor z = random_normal({2, 3}, 1.0, rng);
  const Tensor e = random_normal({2, 3}, 1.0, rng);
  const int t = s.steps;
  const int t_prev = s.steps / 2;
  double worst = 0.0;
  const Tensor zero_eps = ddim_step(z, Tensor::zeros({2, 3}), t, t_prev, s);
  const double ratio = std::sqrt(s.alpha_bar_at(t_prev) / s.alpha_bar_at(t));
  for (std::size_t i = 0; i < z.numel(); ++i) worst = std::max(worst, std::abs(zero_eps.data()[i] - ratio * z.data()[i]));
  // A schedule whose alpha_bar does not move between the two steps.
  NoiseSchedule flat = s;
  flat.alpha_bar[static_cast<std::size_t>(t_prev - 1)] = flat.alpha_bar[static_cast<std::size_t>(t - 1)];
  const Tensor same = t_prev >= 1 ? ddim_step(z, e, t, t_prev, flat) : z;
  for (std::size_t i = 0; i < z.numel(); ++i) worst = std::max(worst, std::abs(same.data()[i] - z.data()[i]));
  return {"ddim.identities", worst == 0.0, worst, 0.0};
}

CheckResult contrastive_routes_check(const TrainConfig& cfg) {
  const ContrastiveConfig cc = cfg.contrastive();
  std::mt19937_64 rng(cfg.seed + 53);
  const auto n = static_cast<std::size_t>(cc.frames);
  const Tensor emb = random_normal({n, 6}, 1.0, rng);
  const double tensor_route = contrastive_loss(emb, cc).item();
  double scalar_route = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::vector<double> sims(n);
    for (std::size_t k = 0; k < n; ++k) {
      sims[k] = cosine_sim(emb.data().subspan(i * 6, 6), emb.data().subspan(k * 6, 6));
    }
    scalar_route += anchor_loss(static_cast<int>(i + 1), sims, cc);
  }
  scalar_route /= static_cast<double>(n - 1);
  const double gap = std::abs(tensor_route - scalar_route);
  return {"contrastive.two_routes", gap < 1e-10, gap, 1e-10};
}

}  // namespace

std::vector<CheckResult> run_checks(const TrainConfig& cfg) {
  cfg.validate();
  return {
      full_pipeline_gradient(cfg),
      attention_gradient(cfg),
      mask_check("mask.versatile", false),
      mask_check("mask.sparse_causal", true),
      schedule_check(cfg),
      ddim_identity_check(cfg),
      contrastive_routes_check(cfg),
  };
}

}  // namespace motiondiff
