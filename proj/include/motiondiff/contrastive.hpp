#pragma once

#include <cstddef>
#include <random>
#include <span>

#include "motiondiff/nn.hpp"
#include "motiondiff/tensor.hpp"

namespace motiondiff {

/// Two-layer perceptron from a flattened per-frame noise map to an embedding.
struct NoiseAdapterParams {
  Tensor w1;  // [c*h*w, hidden]
  Tensor b1;  // [hidden]
  Tensor w2;  // [hidden, embed]
  Tensor b2;  // [embed]

  NamedTensors named() const;
  std::size_t input_dim() const { return w1.dim(0); }
};

NoiseAdapterParams init_noise_adapter(std::size_t input_dim, std::size_t hidden, std::size_t embed,
                                      std::mt19937_64& rng);

struct ContrastiveConfig {
  double tau = 0.07;
  int m = 4;        // frames further apart than m are negatives
  int frames = 8;

  /// Throws ConfigError unless tau > 0 and 1 <= m < frames.
  void validate() const;
};

/// Embedding of one predicted-noise frame [c, h, w] -> [embed].
Tensor adapt(const Tensor& eps_frame, const NoiseAdapterParams& params);
/// Embeddings of every frame of a single video [1, c, N, h, w] -> [N, embed].
Tensor adapt_frames(const Tensor& eps_video, const NoiseAdapterParams& params);

/// Cosine similarity; 0 when either vector has zero norm.
double cosine_sim(std::span<const double> u, std::span<const double> v);

/// Loss of anchor i (1-based, 1 <= i <= N-1) given its similarity row
/// sims[k-1] = r(i, k). The positive is frame i+1; negatives are frames k with
/// |k - i| > m.
double anchor_loss(int anchor, std::span<const double> sims, const ContrastiveConfig& cfg);

/// Mean anchor loss over anchors 1..N-1 for embeddings [N, embed], recorded
/// for backpropagation.
Tensor contrastive_loss(const Tensor& embeddings, const ContrastiveConfig& cfg);

/// lambda_diff * l_diff + lambda_con * l_con.
Tensor combined_loss(const Tensor& l_diff, const Tensor& l_con, double lambda_diff, double lambda_con);

}  // namespace motiondiff
