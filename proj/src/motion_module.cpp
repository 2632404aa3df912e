#include "motiondiff/motion_module.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "motiondiff/errors.hpp"

namespace motiondiff {

namespace {

// [b, c, N, h, w] <-> [b, h, w, N, c]
const std::vector<std::size_t> kToSequence{0, 3, 4, 2, 1};
const std::vector<std::size_t> kFromSequence{0, 4, 3, 1, 2};
// [b, c, N, h, w] <-> [b, N, h, w, c]
const std::vector<std::size_t> kToPixels{0, 2, 3, 4, 1};
const std::vector<std::size_t> kFromPixels{0, 4, 1, 2, 3};

void check_video(const Tensor& video, std::string_view where) {
  bool ok = video.rank() == 5;
  for (std::size_t i = 0; ok && i < 5; ++i) ok = video.shape()[i] >= 1;
  if (!ok) {
    throw DimensionError(std::string(where) + ": expected [batch, channels, frames, height, width], got " +
                         shape_to_string(video.shape()));
  }
}

AttentionMask mask_from(std::size_t n, auto&& allowed) {
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) values[i * n + j] = allowed(i, j) ? 1.0 : 0.0;
  }
  return AttentionMask{Tensor(Shape{n, n}, std::move(values))};
}

// Low-frequency Fourier features of (x, y) mixed into `hidden` channels by a
// random projection: [h * w, hidden].
Tensor position_features(std::size_t h, std::size_t w, std::size_t hidden, std::mt19937_64& rng) {
  constexpr int kFrequencies = 3;
  constexpr std::size_t kFeatures = 4 * kFrequencies;
  std::vector<double> basis(h * w * kFeatures);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* row = basis.data() + (y * w + x) * kFeatures;
      for (int k = 1; k <= kFrequencies; ++k) {
        const double ax = std::numbers::pi * k * (static_cast<double>(x) + 0.5) / static_cast<double>(w);
        const double ay = std::numbers::pi * k * (static_cast<double>(y) + 0.5) / static_cast<double>(h);
        *row++ = std::sin(ax);
        *row++ = std::cos(ax);
        *row++ = std::sin(ay);
        *row++ = std::cos(ay);
      }
    }
  }
  const Tensor mix = random_normal({kFeatures, hidden}, 1.0 / std::sqrt(static_cast<double>(kFrequencies)), rng);
  return matmul(Tensor(Shape{h * w, kFeatures}, std::move(basis)), mix);
}

AttentionParams init_attention(std::size_t inner, std::size_t heads, std::mt19937_64& rng) {
  const std::size_t d = inner / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(inner));
  AttentionParams p;
  for (std::size_t h = 0; h < heads; ++h) {
    p.heads.push_back(AttentionHead{random_normal({inner, d}, s, rng), random_normal({inner, d}, s, rng),
                                    random_normal({inner, d}, s, rng)});
  }
  p.w_out = random_normal({inner, inner}, s, rng);
  return p;
}

void name_attention(NamedTensors& out, const std::string& prefix, const AttentionParams& p) {
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const std::string head = prefix + ".head" + std::to_string(h);
    out.emplace_back(head + ".w_query", p.heads[h].w_query);
    out.emplace_back(head + ".w_key", p.heads[h].w_key);
    out.emplace_back(head + ".w_value", p.heads[h].w_value);
  }
  out.emplace_back(prefix + ".w_out", p.w_out);
}

}  // namespace

void ModelConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("model config: ") + what);
  };
  require(channels >= 1 && frames >= 1 && height >= 1 && width >= 1, "latent dims must be >= 1");
  require(inner_dim >= 1 && heads >= 1, "inner_dim and heads must be >= 1");
  require(inner_dim % heads == 0, "inner_dim must be divisible by heads");
  require(feature_dim >= 1, "feature_dim must be >= 1");
  require(layers >= 1, "layers must be >= 1");
  require(image_hidden >= 1 && adapter_hidden >= 1 && adapter_embed >= 1, "hidden widths must be >= 1");
  require(time_embed_dim >= 2 && time_embed_dim % 2 == 0, "time_embed_dim must be even and >= 2");
  require(num_conditions >= 1, "num_conditions must be >= 1");
}

AttentionMask versatile_mask(int frames) {
  if (frames < 1) throw ContractError("versatile_mask: frame count must be >= 1");
  return mask_from(static_cast<std::size_t>(frames), [](std::size_t, std::size_t) { return true; });
}

AttentionMask sparse_causal_mask(int frames) {
  if (frames < 1) throw ContractError("sparse_causal_mask: frame count must be >= 1");
  return mask_from(static_cast<std::size_t>(frames),
                   [](std::size_t i, std::size_t j) { return i == 0 ? j == 0 : j + 1 == i; });
}

NamedTensors MotionModuleParams::named() const {
  NamedTensors out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string prefix = "motion.block" + std::to_string(b);
    out.emplace_back(prefix + ".proj_in", blocks[b].proj_in);
    out.emplace_back(prefix + ".proj_out", blocks[b].proj_out);
    name_attention(out, prefix + ".versatile", blocks[b].versatile);
    name_attention(out, prefix + ".sparse_causal", blocks[b].sparse_causal);
  }
  return out;
}

NamedTensors ImageLayerParams::named() const {
  NamedTensors out;
  out.emplace_back("image.stem", stem);
  out.emplace_back("image.head", head);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "image.layer" + std::to_string(l);
    out.emplace_back(prefix + ".w_in", layers[l].w_in);
    out.emplace_back(prefix + ".w_out", layers[l].w_out);
    out.emplace_back(prefix + ".time_proj", layers[l].time_proj);
    out.emplace_back(prefix + ".position", layers[l].position);
  }
  out.emplace_back("image.cond_table", cond_table);
  return out;
}

ImageLayerParams init_image_layers(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const auto c = cfg.feature_dim;
  const auto hidden = cfg.image_hidden;
  ImageLayerParams p;
  p.stem = random_normal({cfg.channels, c}, 1.0 / std::sqrt(static_cast<double>(cfg.channels)), rng);
  p.head = random_normal({c, cfg.channels}, 0.5 / std::sqrt(static_cast<double>(c)), rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    FrozenLayerParams layer;
    layer.w_in = random_normal({c, hidden}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
    layer.w_out = random_normal({hidden, c}, 0.5 / std::sqrt(static_cast<double>(hidden)), rng);
    layer.time_proj =
        random_normal({cfg.time_embed_dim, hidden}, 1.0 / std::sqrt(static_cast<double>(cfg.time_embed_dim)), rng);
    layer.position = position_features(cfg.height, cfg.width, hidden, rng);
    p.layers.push_back(std::move(layer));
  }
  p.cond_table = random_normal({cfg.num_conditions, cfg.time_embed_dim}, 1.0, rng);
  return p;
}

MotionModuleParams init_motion_module(const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const auto c = cfg.feature_dim;
  const auto inner = cfg.inner_dim;
  MotionModuleParams p;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    MotionBlockParams block;
    block.proj_in = random_normal({c, inner}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
    block.versatile = init_attention(inner, cfg.heads, rng);
    block.sparse_causal = init_attention(inner, cfg.heads, rng);
    block.proj_out = cfg.zero_init_out ? Tensor::zeros({inner, c})
                                       : random_normal({inner, c}, 1.0 / std::sqrt(static_cast<double>(inner)), rng);
    p.blocks.push_back(std::move(block));
  }
  for (auto& [name, t] : p.named()) t.set_requires_grad(true);
  return p;
}

Tensor frame_encoding(std::size_t frames, std::size_t dim) {
  std::vector<double> values;
  values.reserve(frames * dim);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto row = timestep_embedding(static_cast<int>(f), dim);
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{frames, dim}, std::move(values));
}

std::vector<double> timestep_embedding(int t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out(dim, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
  return out;
}

Tensor project_in(const Tensor& video, const Tensor& proj_in) {
  check_video(video, "project_in");
  const auto& s = video.shape();
  if (proj_in.rank() != 2 || proj_in.dim(0) != s[1]) {
    throw DimensionError("project_in: weight " + shape_to_string(proj_in.shape()) +
                         " does not accept " + std::to_string(s[1]) + " channels");
  }
  const std::size_t positions = s[0] * s[3] * s[4];
  const Tensor seq = reshape(permute(video, kToSequence), {positions * s[2], s[1]});
  return reshape(matmul(seq, proj_in), {positions, s[2], proj_in.dim(1)});
}

Tensor project_out(const Tensor& sequence, const Tensor& proj_out, const Shape& video_shape) {
  if (video_shape.size() != 5 || sequence.rank() != 3 || proj_out.rank() != 2 ||
      proj_out.dim(0) != sequence.dim(2) || proj_out.dim(1) != video_shape[1] ||
      sequence.dim(0) != video_shape[0] * video_shape[3] * video_shape[4] || sequence.dim(1) != video_shape[2]) {
    throw DimensionError("project_out: sequence " + shape_to_string(sequence.shape()) + " with weight " +
                         shape_to_string(proj_out.shape()) + " cannot produce video " +
                         shape_to_string(video_shape));
  }
  const auto& s = video_shape;
  const Tensor flat = reshape(sequence, {sequence.dim(0) * sequence.dim(1), sequence.dim(2)});
  const Tensor mixed = reshape(matmul(flat, proj_out), {s[0], s[3], s[4], s[2], s[1]});
  return permute(mixed, kFromSequence);
}

Tensor masked_attention(const Tensor& z, const AttentionMask& mask, const AttentionParams& params) {
  if (z.rank() != 3) throw DimensionError("masked_attention: expected [B, N, inner], got " + shape_to_string(z.shape()));
  const std::size_t batch = z.dim(0);
  const std::size_t frames = z.dim(1);
  const std::size_t inner = z.dim(2);
  if (mask.size() != frames) {
    throw DimensionError("masked_attention: mask size " + std::to_string(mask.size()) + " vs " +
                         std::to_string(frames) + " frames");
  }
  if (params.heads.empty() || params.w_out.rank() != 2 || params.w_out.dim(1) != inner) {
    throw DimensionError("masked_attention: output projection does not match inner width");
  }
  const Tensor rows = reshape(z, {batch * frames, inner});
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(params.heads.size());
  for (const auto& head : params.heads) {
    const std::size_t d = head.w_query.dim(1);
    const Tensor q = reshape(matmul(rows, head.w_query), {batch, frames, d});
    const Tensor k = reshape(matmul(rows, head.w_key), {batch, frames, d});
    const Tensor v = reshape(matmul(rows, head.w_value), {batch, frames, d});
    const Tensor scores = scale(matmul(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(d)));
    const Tensor weights = softmax_lastdim(masked_neg_inf_fill(scores, mask.values));
    head_outputs.push_back(matmul(weights, v));
  }
  const Tensor joined = head_outputs.size() == 1 ? head_outputs.front() : concatenate(head_outputs, 2);
  if (joined.dim(2) != params.w_out.dim(0)) {
    throw DimensionError("masked_attention: concatenated heads have width " + std::to_string(joined.dim(2)) +
                         ", output projection expects " + std::to_string(params.w_out.dim(0)));
  }
  const Tensor out = matmul(reshape(joined, {batch * frames, joined.dim(2)}), params.w_out);
  for (double x : out.data()) {
    if (!std::isfinite(x)) throw NumericError("masked_attention: non-finite activation");
  }
  return reshape(out, {batch, frames, inner});
}

Tensor motion_block_forward(const Tensor& video, const MotionBlockParams& params, const MotionOptions& options) {
  check_video(video, "motion_block_forward");
  const int frames = static_cast<int>(video.dim(2));
  Tensor h = project_in(video, params.proj_in);
  h = add(h, frame_encoding(video.dim(2), h.dim(2)));
  if (options.use_versatile) h = add(h, masked_attention(h, versatile_mask(frames), params.versatile));
  if (options.use_sparse_causal) {
    h = add(h, masked_attention(h, sparse_causal_mask(frames), params.sparse_causal));
  }
  return add(video, project_out(h, params.proj_out, video.shape()));
}

Tensor image_layer_forward(const Tensor& video, const FrozenLayerParams& layer, const Tensor& cond_table, int t,
                           int cond_id) {
  check_video(video, "image_layer_forward");
  if (cond_id < 0 || static_cast<std::size_t>(cond_id) >= cond_table.dim(0)) {
    throw IndexError("unknown condition id " + std::to_string(cond_id) + " (table has " +
                     std::to_string(cond_table.dim(0)) + " entries)");
  }
  const auto& s = video.shape();
  const std::size_t c = s[1];
  const std::size_t pixels = s[3] * s[4];
  const std::size_t hidden = layer.w_in.dim(1);
  if (layer.w_in.dim(0) != c || layer.position.dim(0) != pixels) {
    throw DimensionError("image_layer_forward: layer weights do not match video " + shape_to_string(s));
  }
  const std::size_t embed_dim = cond_table.dim(1);
  const Tensor time(Shape{embed_dim}, timestep_embedding(t, embed_dim));
  const Tensor cond = slice(cond_table, 0, static_cast<std::size_t>(cond_id), 1);
  const Tensor bias = reshape(matmul(add(cond, time), layer.time_proj), {hidden});

  const std::size_t rows = s[0] * s[2] * pixels;
  const Tensor x = reshape(permute(video, kToPixels), {rows, c});
  Tensor pre = reshape(matmul(x, layer.w_in), {s[0] * s[2], pixels, hidden});
  pre = add(add(pre, layer.position), bias);
  const Tensor act = reshape(smooth_relu(pre), {rows, hidden});
  const Tensor mixed = reshape(matmul(act, layer.w_out), {s[0], s[2], s[3], s[4], c});
  return add(video, permute(mixed, kFromPixels));
}

Tensor pixel_linear(const Tensor& video, const Tensor& weight) {
  check_video(video, "pixel_linear");
  const auto& s = video.shape();
  if (weight.rank() != 2 || weight.dim(0) != s[1]) {
    throw DimensionError("pixel_linear: weight " + shape_to_string(weight.shape()) + " does not accept " +
                         std::to_string(s[1]) + " channels");
  }
  const std::size_t rows = s[0] * s[2] * s[3] * s[4];
  const Tensor x = reshape(permute(video, kToPixels), {rows, s[1]});
  const Tensor mixed = reshape(matmul(x, weight), {s[0], s[2], s[3], s[4], weight.dim(1)});
  return permute(mixed, kFromPixels);
}

Tensor denoiser_forward(const Tensor& z_t, int t, double alpha_bar, int cond_id, const ImageLayerParams& image,
                        const MotionModuleParams& motion, const MotionOptions& options) {
  check_video(z_t, "denoiser_forward");
  if (t < 1) throw IndexError("denoiser_forward: timestep " + std::to_string(t) + " < 1");
  if (!(alpha_bar > 0.0 && alpha_bar < 1.0)) {
    throw ContractError("denoiser_forward: alpha_bar must lie in (0, 1), got " + std::to_string(alpha_bar));
  }
  if (image.layers.size() != motion.blocks.size()) {
    throw DimensionError("denoiser_forward: " + std::to_string(image.layers.size()) + " image layers vs " +
                         std::to_string(motion.blocks.size()) + " motion blocks");
  }
  const Tensor stem = pixel_linear(z_t, image.stem);
  Tensor x = stem;
  for (std::size_t l = 0; l < image.layers.size(); ++l) {
    x = image_layer_forward(x, image.layers[l], image.cond_table, t, cond_id);
    x = motion_block_forward(x, motion.blocks[l], options);
  }
  // The stack estimates the velocity v = sqrt(abar) eps - sqrt(1 - abar) z_0
  // from what the layers added to the stem; the noise follows as
  // eps = sqrt(1 - abar) z_t + sqrt(abar) v. With v = 0 this is the best
  // data-independent guess, and errors in v are damped at large t instead of
  // being amplified by the sampler.
  const Tensor velocity = pixel_linear(sub(x, stem), image.head);
  return add(scale(z_t, std::sqrt(1.0 - alpha_bar)), scale(velocity, std::sqrt(alpha_bar)));
}

}  // namespace motiondiff
