#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "motiondiff/contrastive.hpp"
#include "motiondiff/motion_module.hpp"

namespace motiondiff {

/// Everything a training run needs. Defaults are the desk-scale toy setup.
struct TrainConfig {
  ModelConfig model;
  int timesteps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  double tau = 0.07;
  int negative_threshold = 4;
  double lambda_diff = 1.0;
  double lambda_con = 0.07;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  int steps = 1000;
  std::uint64_t seed = 0;
  int dataset_size = 64;
  int checkpoint_every = 500;
  std::string checkpoint_dir = "checkpoints";
  std::string output_dir = "samples";

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
  ContrastiveConfig contrastive() const {
    return {tau, negative_threshold, static_cast<int>(model.frames)};
  }
};

/// Parses a flat JSON object. Unknown keys and wrongly typed values are
/// ConfigErrors; missing keys keep their defaults. The result is validated.
TrainConfig parse_config(std::string_view json_text);
TrainConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const TrainConfig& cfg);

}  // namespace motiondiff
