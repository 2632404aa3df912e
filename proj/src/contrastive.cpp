#include "motiondiff/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "motiondiff/errors.hpp"

namespace motiondiff {

namespace {

bool is_negative(int anchor, int k, int m) { return std::abs(k - anchor) > m; }

}  // namespace

NamedTensors NoiseAdapterParams::named() const {
  return {{"adapter.w1", w1}, {"adapter.b1", b1}, {"adapter.w2", w2}, {"adapter.b2", b2}};
}

NoiseAdapterParams init_noise_adapter(std::size_t input_dim, std::size_t hidden, std::size_t embed,
                                      std::mt19937_64& rng) {
  NoiseAdapterParams p;
  p.w1 = random_normal({input_dim, hidden}, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
  p.b1 = Tensor::zeros({hidden});
  p.w2 = random_normal({hidden, embed}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  p.b2 = Tensor::zeros({embed});
  for (auto& [name, t] : p.named()) t.set_requires_grad(true);
  return p;
}

void ContrastiveConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("contrastive config: tau must be > 0");
  if (m < 1 || m >= frames) {
    throw ConfigError("contrastive config: need 1 <= m < N, got m=" + std::to_string(m) +
                      ", N=" + std::to_string(frames));
  }
}

Tensor adapt(const Tensor& eps_frame, const NoiseAdapterParams& params) {
  if (eps_frame.numel() != params.input_dim()) {
    throw DimensionError("adapt: frame " + shape_to_string(eps_frame.shape()) + " has " +
                         std::to_string(eps_frame.numel()) + " values, adapter expects " +
                         std::to_string(params.input_dim()));
  }
  const Tensor row = reshape(eps_frame, {1, eps_frame.numel()});
  const Tensor hidden = smooth_relu(add(matmul(row, params.w1), params.b1));
  return reshape(add(matmul(hidden, params.w2), params.b2), {params.w2.dim(1)});
}

Tensor adapt_frames(const Tensor& eps_video, const NoiseAdapterParams& params) {
  if (eps_video.rank() != 5 || eps_video.dim(0) != 1) {
    throw DimensionError("adapt_frames: expected a single video [1, c, N, h, w], got " +
                         shape_to_string(eps_video.shape()));
  }
  const auto& s = eps_video.shape();
  const std::size_t frames = s[2];
  const std::size_t per_frame = s[1] * s[3] * s[4];
  if (per_frame != params.input_dim()) {
    throw DimensionError("adapt_frames: frame size " + std::to_string(per_frame) + " vs adapter input " +
                         std::to_string(params.input_dim()));
  }
  const Tensor rows = reshape(permute(eps_video, {0, 2, 1, 3, 4}), {frames, per_frame});
  const Tensor hidden = smooth_relu(add(matmul(rows, params.w1), params.b1));
  return add(matmul(hidden, params.w2), params.b2);
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || u.empty()) {
    throw DimensionError("cosine_sim: lengths " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

double anchor_loss(int anchor, std::span<const double> sims, const ContrastiveConfig& cfg) {
  const int n = static_cast<int>(sims.size());
  if (anchor < 1 || anchor > n - 1) {
    throw ContractError("anchor_loss: anchor " + std::to_string(anchor) + " has no successor among " +
                        std::to_string(n) + " frames");
  }
  if (!(cfg.tau > 0.0)) throw ContractError("anchor_loss: tau must be > 0");
  const double positive = sims[static_cast<std::size_t>(anchor)] / cfg.tau;
  std::vector<double> logits{positive};
  for (int k = 1; k <= n; ++k) {
    if (is_negative(anchor, k, cfg.m)) logits.push_back(sims[static_cast<std::size_t>(k - 1)] / cfg.tau);
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - peak);
  return peak + std::log(total) - positive;
}

Tensor contrastive_loss(const Tensor& embeddings, const ContrastiveConfig& cfg) {
  if (embeddings.rank() != 2) {
    throw DimensionError("contrastive_loss: expected [N, embed], got " + shape_to_string(embeddings.shape()));
  }
  const std::size_t n = embeddings.dim(0);
  if (n < 2) throw ContractError("contrastive_loss: need at least 2 frames");
  if (!(cfg.tau > 0.0)) throw ContractError("contrastive_loss: tau must be > 0");

  // Row i of the candidate mask keeps the positive (i+1) and the negatives;
  // the selector picks log p(i+1 | i) for every anchor and averages.
  std::vector<double> candidates(n * n, 0.0);
  std::vector<double> selector(n * n, 0.0);
  const double weight = 1.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const bool positive = k == i + 1;
      const bool negative = is_negative(static_cast<int>(i), static_cast<int>(k), cfg.m);
      candidates[i * n + k] = (positive || negative) ? 1.0 : 0.0;
    }
    if (i + 1 < n) selector[i * n + i + 1] = weight;
  }
  const Tensor unit = cosine_normalize_lastdim(embeddings);
  const Tensor sims = scale(matmul(unit, permute(unit, {1, 0})), 1.0 / cfg.tau);
  const Tensor log_probs = log_softmax_lastdim(
      masked_neg_inf_fill(sims, Tensor(Shape{n, n}, std::move(candidates))));
  return scale(sum(mul(log_probs, Tensor(Shape{n, n}, std::move(selector)))), -1.0);
}

Tensor combined_loss(const Tensor& l_diff, const Tensor& l_con, double lambda_diff, double lambda_con) {
  if (lambda_diff < 0.0 || lambda_con < 0.0) throw ContractError("combined_loss: weights must be >= 0");
  return add(scale(l_diff, lambda_diff), scale(l_con, lambda_con));
}

}  // namespace motiondiff
