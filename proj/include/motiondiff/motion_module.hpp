#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "motiondiff/nn.hpp"
#include "motiondiff/tensor.hpp"

namespace motiondiff {

/// Sizes of the denoiser. Video latents are [batch, channels, frames, height, width].
struct ModelConfig {
  std::size_t channels = 4;
  /// Width of the hidden state the image layers and motion blocks work on.
  std::size_t feature_dim = 32;
  std::size_t frames = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t inner_dim = 16;
  std::size_t heads = 1;
  std::size_t layers = 2;
  std::size_t image_hidden = 32;
  std::size_t time_embed_dim = 16;
  std::size_t num_conditions = 4;
  std::size_t adapter_hidden = 32;
  std::size_t adapter_embed = 16;
  bool use_versatile = true;
  bool use_sparse_causal = true;
  bool zero_init_out = true;

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
  Shape latent_shape(std::size_t batch = 1) const { return {batch, channels, frames, height, width}; }
};

/// Square 0/1 matrix; entry (i, j) == 1 lets frame i attend to frame j.
struct AttentionMask {
  Tensor values;

  std::size_t size() const { return values.dim(0); }
  bool allows(std::size_t i, std::size_t j) const { return values.at({i, j}) != 0.0; }
};

/// Every frame attends to every frame.
AttentionMask versatile_mask(int frames);
/// Frame i attends only to frame i-1. The first frame has no predecessor and
/// attends to itself so its softmax row stays defined.
AttentionMask sparse_causal_mask(int frames);

struct AttentionHead {
  Tensor w_query;  // [inner, d]
  Tensor w_key;    // [inner, d]
  Tensor w_value;  // [inner, d]
};

struct AttentionParams {
  std::vector<AttentionHead> heads;
  Tensor w_out;  // [inner, inner], applied to concatenated heads
};

struct MotionBlockParams {
  Tensor proj_in;   // [features, inner]
  Tensor proj_out;  // [inner, features]
  AttentionParams versatile;
  AttentionParams sparse_causal;
};

struct MotionModuleParams {
  std::vector<MotionBlockParams> blocks;

  NamedTensors named() const;
};

/// Frozen per-frame stand-in for the pretrained image layers.
struct FrozenLayerParams {
  Tensor w_in;       // [features, hidden]
  Tensor w_out;      // [hidden, features]
  Tensor time_proj;  // [time_embed_dim, hidden]
  Tensor position;   // [height * width, hidden]
};

struct ImageLayerParams {
  Tensor stem;  // [channels, features]: latent -> hidden state
  Tensor head;  // [features, channels]: hidden state -> noise residual
  std::vector<FrozenLayerParams> layers;
  Tensor cond_table;  // [num_conditions, time_embed_dim]

  NamedTensors named() const;
};

struct MotionOptions {
  bool use_versatile = true;
  bool use_sparse_causal = true;
};

ImageLayerParams init_image_layers(const ModelConfig& cfg, std::uint64_t seed);
MotionModuleParams init_motion_module(const ModelConfig& cfg, std::mt19937_64& rng);

/// Sinusoidal embedding of a timestep; first half sines, second half cosines.
std::vector<double> timestep_embedding(int t, std::size_t dim);

/// Fixed sinusoidal encoding of frame index, [frames, dim]. Added to the
/// embedded sequence inside every motion block so attention can tell frames apart.
Tensor frame_encoding(std::size_t frames, std::size_t dim);

/// [b, c, N, h, w] -> [(b h w), N, inner]: spatial positions folded into the
/// batch, each position's frame sequence embedded to the inner width.
Tensor project_in(const Tensor& video, const Tensor& proj_in);
/// Inverse layout of project_in; `video_shape` is the original latent shape.
Tensor project_out(const Tensor& sequence, const Tensor& proj_out, const Shape& video_shape);

/// Multi-head scaled dot-product attention over the frame axis of z[B', N, inner].
Tensor masked_attention(const Tensor& z, const AttentionMask& mask, const AttentionParams& params);

/// project_in + frame encoding -> (versatile attention + residual) -> (sparse-causal attention
/// + residual) -> project_out, added back onto the input.
Tensor motion_block_forward(const Tensor& video, const MotionBlockParams& params,
                            const MotionOptions& options = {});

/// One frozen per-pixel channel mixer with timestep/condition/position biases.
Tensor image_layer_forward(const Tensor& video, const FrozenLayerParams& layer,
                           const Tensor& cond_table, int t, int cond_id);

/// Per-pixel channel map [b, c, N, h, w] x [c, c'] -> [b, c', N, h, w].
Tensor pixel_linear(const Tensor& video, const Tensor& weight);

/// Predicted noise for every frame. A stem lifts the latent to the feature
/// width, L (frozen image layer -> motion block) pairs refine it, and the head
/// reads a velocity estimate v from the refinement; the result is
/// sqrt(1 - alpha_bar) z_t + sqrt(alpha_bar) v. `alpha_bar` is the cumulative
/// signal fraction at timestep t and must lie in (0, 1).
Tensor denoiser_forward(const Tensor& z_t, int t, double alpha_bar, int cond_id, const ImageLayerParams& image,
                        const MotionModuleParams& motion, const MotionOptions& options = {});

}  // namespace motiondiff
