#pragma once

#include <string>
#include <vector>

#include "motiondiff/config.hpp"

namespace motiondiff {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
};

/// Self-verification suite: finite-difference gradient checks on the full
/// denoiser + combined loss built from `cfg` (with a non-zero output
/// projection so every trainable tensor receives gradient), plus mask,
/// schedule, sampler and loss identities.
std::vector<CheckResult> run_checks(const TrainConfig& cfg);

}  // namespace motiondiff
