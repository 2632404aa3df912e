// motiondiff: train, sample, interpolate and self-check from the command line.
//
// Exit codes: 0 success, 2 bad arguments or configuration, 3 numeric abort
// during training, 4 corrupt checkpoint, 5 failed self-check, 1 anything else.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "motiondiff/checks.hpp"
#include "motiondiff/config.hpp"
#include "motiondiff/errors.hpp"
#include "motiondiff/interpolation.hpp"
#include "motiondiff/pgm.hpp"
#include "motiondiff/tensor.hpp"
#include "motiondiff/trainer.hpp"

namespace fs = std::filesystem;
using namespace motiondiff;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kBadInput = 2,
  kNumericAbort = 3,
  kCorruptCheckpoint = 4,
  kCheckFailed = 5,
};

struct TrainArgs {
  std::string config;
  std::string resume;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct SampleArgs {
  std::string ckpt;
  int cond = 0;
  std::uint64_t seed = 0;
  int steps = 25;
  std::string out;
};

struct InterpolateArgs {
  std::string in;
  std::string out;
};

struct CheckArgs {
  std::string config;
  std::string inject_fault;
};

void write_frames(const fs::path& dir, const std::vector<Tensor>& frames) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    write_pgm(dir / fmt::format("frame_{:03d}.pgm", i), frames[i]);
  }
}

int run_train(const TrainArgs& args) {
  TrainConfig cfg;
  try {
    cfg = load_config(args.config);
    if (args.steps) cfg.steps = *args.steps;
    if (args.seed) cfg.seed = *args.seed;
    if (!args.out.empty()) cfg.checkpoint_dir = args.out;
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  }

  TrainOptions options;
  options.output_dir = fs::path(cfg.checkpoint_dir);
  if (!args.resume.empty()) options.resume_from = fs::path(args.resume);
  const int report_every = std::max(1, cfg.steps / 20);
  options.on_step = [&](const StepLosses& s) {
    if ((s.step + 1) % report_every == 0 || s.step + 1 == cfg.steps) {
      std::cout << fmt::format("step {:6d}  t={:4d}  l_diff={:.5f}  l_con={:.5f}  l_total={:.5f}\n", s.step + 1,
                               s.timestep, s.l_diff, s.l_con, s.l_total);
    }
  };
  try {
    const TrainingState state = train(cfg, options);
    std::cout << "wrote " << (fs::path(cfg.checkpoint_dir) / "final").string() << " after " << state.step
              << " steps\n";
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumericAbort;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const FormatError& e) {
    std::cerr << "corrupt checkpoint: " << e.what() << '\n';
    return kCorruptCheckpoint;
  }
  return kOk;
}

int run_sample(const SampleArgs& args) {
  fs::path ckpt = args.ckpt;
  if (!fs::exists(ckpt)) {
    std::cerr << "error: checkpoint " << ckpt.string() << " does not exist\n";
    return kBadInput;
  }
  if (!fs::exists(ckpt / "state.json") && fs::exists(ckpt / "final" / "state.json")) ckpt /= "final";

  TrainingState state = [&]() -> TrainingState {
    try {
      return load_checkpoint(ckpt);
    } catch (const ConfigError& e) {
      throw FormatError(e.what());
    }
  }();
  if (args.cond < 0 || static_cast<std::size_t>(args.cond) >= state.cfg.model.num_conditions) {
    std::cerr << "error: --cond must be in [0, " << state.cfg.model.num_conditions << ")\n";
    return kBadInput;
  }
  if (args.steps < 1 || args.steps > state.cfg.timesteps) {
    std::cerr << "error: --steps must be in [1, " << state.cfg.timesteps << "]\n";
    return kBadInput;
  }
  const auto frames = sample_video(state.cfg, state.model, args.cond, args.steps, args.seed);
  write_frames(args.out, frames);
  std::cout << fmt::format("wrote {} frames to {}\ntemporal consistency: {:.6f}\n", frames.size(), args.out,
                           eval_temporal_consistency(frames));
  return kOk;
}

int run_interpolate(const InterpolateArgs& args) {
  if (!fs::is_directory(args.in)) {
    std::cerr << "error: input directory " << args.in << " not found\n";
    return kBadInput;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(args.in)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) {
    std::cerr << "error: need at least 2 PGM frames in " << args.in << ", found " << files.size() << '\n';
    return kBadInput;
  }
  std::vector<Tensor> frames;
  for (const auto& f : files) {
    try {
      frames.push_back(read_pgm(f));
    } catch (const FormatError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kBadInput;
    }
  }
  std::vector<Tensor> out;
  try {
    out = interpolate_sequence(frames);
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  }
  write_frames(args.out, out);
  std::cout << fmt::format("wrote {} frames to {}\n", out.size(), args.out);
  return kOk;
}

int run_check(const CheckArgs& args) {
  TrainConfig cfg;
  try {
    if (!args.config.empty()) cfg = load_config(args.config);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  }
  if (!args.inject_fault.empty()) testing::inject_gradient_fault(args.inject_fault);
  const auto results = run_checks(cfg);
  testing::clear_gradient_faults();

  bool all = true;
  std::cout << fmt::format("{:<26} {:>6} {:>14} {:>12}\n", "check", "result", "measured", "threshold");
  for (const auto& r : results) {
    all = all && r.passed;
    std::cout << fmt::format("{:<26} {:>6} {:>14.3e} {:>12.1e}\n", r.name, r.passed ? "pass" : "FAIL", r.measured,
                             r.threshold);
  }
  return all ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-module video diffusion toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train motion module and noise adapter on synthetic clips");
  train_cmd->add_option("--config", train_args.config, "JSON config")->required();
  train_cmd->add_option("--resume", train_args.resume, "checkpoint directory to continue from");
  train_cmd->add_option("--steps", train_args.steps, "override total steps");
  train_cmd->add_option("--seed", train_args.seed, "override seed");
  train_cmd->add_option("--out", train_args.out, "override checkpoint_dir");

  SampleArgs sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "generate a clip with DDIM and interpolate it to 2N-1 frames");
  sample_cmd->add_option("--ckpt", sample_args.ckpt, "checkpoint directory")->required();
  sample_cmd->add_option("--cond", sample_args.cond, "condition (motion class) id");
  sample_cmd->add_option("--seed", sample_args.seed, "noise seed");
  sample_cmd->add_option("--steps", sample_args.steps, "DDIM steps")->capture_default_str();
  sample_cmd->add_option("--out", sample_args.out, "output directory")->required();

  InterpolateArgs interp_args;
  auto* interp_cmd = app.add_subcommand("interpolate", "expand a PGM sequence from N to 2N-1 frames");
  interp_cmd->add_option("--in", interp_args.in, "directory of PGM frames (lexical order)")->required();
  interp_cmd->add_option("--out", interp_args.out, "output directory")->required();

  CheckArgs check_args;
  auto* check_cmd = app.add_subcommand("check", "gradient checks and invariants");
  check_cmd->add_option("--config", check_args.config, "JSON config (tiny sizes recommended)");
  check_cmd->add_option("--inject-grad-fault", check_args.inject_fault, "corrupt one op's gradient rule")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (*train_cmd) return run_train(train_args);
    if (*sample_cmd) return run_sample(sample_args);
    if (*interp_cmd) return run_interpolate(interp_args);
    if (*check_cmd) return run_check(check_args);
  } catch (const FormatError& e) {
    std::cerr << "corrupt checkpoint: " << e.what() << '\n';
    return kCorruptCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
