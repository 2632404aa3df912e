#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "motiondiff/config.hpp"
#include "motiondiff/contrastive.hpp"
#include "motiondiff/diffusion.hpp"
#include "motiondiff/motion_module.hpp"
#include "motiondiff/optimizer.hpp"
#include "motiondiff/synthetic.hpp"

namespace motiondiff {

/// Frozen image layers plus the two trainable parts.
struct Model {
  ImageLayerParams image;
  MotionModuleParams motion;
  NoiseAdapterParams adapter;

  MotionOptions options;
  NoiseSchedule schedule;

  NamedTensors trainable() const;
  NamedTensors frozen() const;
};

/// Image layers come from `cfg.seed`; motion blocks and adapter from a
/// generator seeded with `cfg.seed + 1`.
Model init_model(const TrainConfig& cfg);

Tensor predict_noise(const Model& model, const Tensor& z_t, int t, int cond_id);

struct StepLosses {
  int step = 0;
  int timestep = 0;
  double l_diff = 0.0;
  double l_con = 0.0;
  double l_total = 0.0;
};

/// Standard normal noise for a [1, c, N, h, w] latent, drawn frame by frame
/// (frame-major, then channel, row, column).
Tensor draw_video_noise(const Shape& shape, std::mt19937_64& rng);

/// One optimisation step. Draws t ~ U{1..T} then per-frame noise from `rng`,
/// noises the clip, predicts the noise, combines diffusion and contrastive
/// losses, backpropagates and updates the trainable tensors only.
/// Throws NumericError (with the step, t and losses) on a non-finite loss.
StepLosses train_step(const SyntheticSample& sample, Model& model, Adam& optimizer, const NoiseSchedule& sched,
                      const TrainConfig& cfg, std::mt19937_64& rng);

/// Everything needed to continue a run bit-identically.
struct TrainingState {
  TrainConfig cfg;
  Model model;
  Adam optimizer;
  std::mt19937_64 rng;
  int step = 0;
  std::vector<StepLosses> log;
};

TrainingState init_training(const TrainConfig& cfg);

struct TrainOptions {
  /// When set, periodic checkpoints go to step_NNNNNN/, the last one to
  /// final/, and the loss log to loss.csv.
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const StepLosses&)> on_step;
};

/// Runs training until `cfg.steps` total steps, cycling through the
/// synthetic dataset.
TrainingState train(const TrainConfig& cfg, const TrainOptions& options = {});

// ---- checkpoints ----

/// Directory with manifest.txt (name, shape, role per tensor), tensors.lmt
/// (LMT1 blobs in manifest order), state.json and loss.csv.
void save_checkpoint(const std::filesystem::path& dir, const TrainingState& state);
/// Throws FormatError for missing or inconsistent files.
TrainingState load_checkpoint(const std::filesystem::path& dir);

void write_loss_log(const std::filesystem::path& path, const std::vector<StepLosses>& log);
std::vector<StepLosses> read_loss_log(const std::filesystem::path& path);

// ---- inference ----

/// z_T drawn from `seed`, then the DDIM ladder; returns z_0 [1, c, N, h, w].
Tensor sample_latent(const TrainConfig& cfg, const Model& model, int cond_id, int sampling_steps,
                     std::uint64_t seed);

/// Channel mean per pixel, then one min-max affine map to [0, 1] over the
/// whole clip. Returns N frames [h, w].
std::vector<Tensor> latents_to_frames(const Tensor& latent);

/// sample_latent -> latents_to_frames -> interpolate_sequence (2N-1 frames).
std::vector<Tensor> sample_video(const TrainConfig& cfg, const Model& model, int cond_id, int sampling_steps,
                                 std::uint64_t seed);

/// Mean cosine similarity of consecutive flattened frames.
double eval_temporal_consistency(const std::vector<Tensor>& frames);

}  // namespace motiondiff
