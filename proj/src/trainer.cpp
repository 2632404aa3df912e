#include "motiondiff/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "motiondiff/errors.hpp"
#include "motiondiff/interpolation.hpp"
#include "motiondiff/tensor_io.hpp"

namespace motiondiff {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kMotionSeedOffset = 1;
constexpr std::uint64_t kDatasetSeedOffset = 2;
constexpr std::uint64_t kTrainSeedOffset = 3;

AdamConfig adam_config(const TrainConfig& cfg) {
  AdamConfig a;
  a.learning_rate = cfg.learning_rate;
  a.weight_decay = cfg.weight_decay;
  return a;
}

std::string shape_token(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

Shape parse_shape_token(const std::string& token) {
  if (token == "scalar") return {};
  Shape shape;
  std::stringstream in(token);
  std::string part;
  while (std::getline(in, part, 'x')) {
    if (part.empty() || !std::all_of(part.begin(), part.end(), ::isdigit)) {
      throw FormatError("checkpoint manifest: bad shape '" + token + "'");
    }
    shape.push_back(std::stoul(part));
  }
  return shape;
}

bool same_model(const ModelConfig& a, const ModelConfig& b) {
  return a.channels == b.channels && a.feature_dim == b.feature_dim && a.frames == b.frames &&
         a.height == b.height && a.width == b.width && a.inner_dim == b.inner_dim && a.heads == b.heads && a.layers == b.layers &&
         a.image_hidden == b.image_hidden && a.time_embed_dim == b.time_embed_dim &&
         a.num_conditions == b.num_conditions && a.adapter_hidden == b.adapter_hidden &&
         a.adapter_embed == b.adapter_embed;
}

// Copies stored values into the freshly initialised tensor of the same name.
void assign_from(NamedTensors targets, const std::map<std::string, Tensor>& stored) {
  for (auto& [name, target] : targets) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape() != target.shape()) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                        ", expected " + shape_to_string(target.shape()));
    }
    std::copy(it->second.data().begin(), it->second.data().end(), target.mutable_data().begin());
  }
}

}  // namespace

NamedTensors Model::trainable() const {
  NamedTensors out = motion.named();
  for (auto& entry : adapter.named()) out.push_back(std::move(entry));
  return out;
}

NamedTensors Model::frozen() const { return image.named(); }

Model init_model(const TrainConfig& cfg) {
  cfg.validate();
  Model model;
  model.image = init_image_layers(cfg.model, cfg.seed);
  std::mt19937_64 rng(cfg.seed + kMotionSeedOffset);
  model.motion = init_motion_module(cfg.model, rng);
  const auto& m = cfg.model;
  model.adapter = init_noise_adapter(m.channels * m.height * m.width, m.adapter_hidden, m.adapter_embed, rng);
  model.options = MotionOptions{m.use_versatile, m.use_sparse_causal};
  model.schedule = build_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
  return model;
}

Tensor predict_noise(const Model& model, const Tensor& z_t, int t, int cond_id) {
  return denoiser_forward(z_t, t, model.schedule.alpha_bar_at(t), cond_id, model.image, model.motion,
                          model.options);
}

Tensor draw_video_noise(const Shape& shape, std::mt19937_64& rng) {
  if (shape.size() != 5) throw DimensionError("draw_video_noise: expected a video shape, got " + shape_to_string(shape));
  const std::size_t b = shape[0], c = shape[1], n = shape[2], hw = shape[3] * shape[4];
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(shape_numel(shape));
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t f = 0; f < n; ++f) {
      for (std::size_t k = 0; k < c; ++k) {
        double* dst = values.data() + ((bi * c + k) * n + f) * hw;
        for (std::size_t p = 0; p < hw; ++p) dst[p] = normal(rng);
      }
    }
  }
  return Tensor(shape, std::move(values));
}

StepLosses train_step(const SyntheticSample& sample, Model& model, Adam& optimizer, const NoiseSchedule& sched,
                      const TrainConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick_t(1, sched.steps);
  const int t = pick_t(rng);
  const Tensor eps = draw_video_noise(sample.video.shape(), rng);
  const Tensor z_t = forward_diffuse(sample.video, t, eps, sched);

  const Tensor eps_pred = predict_noise(model, z_t, t, sample.cond_id);
  const Tensor l_diff = diffusion_loss(eps, eps_pred);
  const Tensor l_con = contrastive_loss(adapt_frames(eps_pred, model.adapter), cfg.contrastive());
  const Tensor total = combined_loss(l_diff, l_con, cfg.lambda_diff, cfg.lambda_con);

  StepLosses out;
  out.timestep = t;
  out.l_diff = l_diff.item();
  out.l_con = l_con.item();
  out.l_total = total.item();
  if (!std::isfinite(out.l_total)) {
    throw NumericError(fmt::format("train_step: non-finite loss at t={} (l_diff={}, l_con={}, l_total={})", t,
                                   out.l_diff, out.l_con, out.l_total));
  }
  optimizer.zero_grad();
  total.backward();
  optimizer.step();
  return out;
}

TrainingState init_training(const TrainConfig& cfg) {
  Model model = init_model(cfg);
  Adam optimizer(model.trainable(), adam_config(cfg));
  return TrainingState{cfg, std::move(model), std::move(optimizer), std::mt19937_64(cfg.seed + kTrainSeedOffset), 0, {}};
}

TrainingState train(const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  TrainingState state = options.resume_from ? load_checkpoint(*options.resume_from) : init_training(cfg);
  if (options.resume_from) {
    if (!same_model(cfg.model, state.cfg.model)) {
      throw ConfigError("resume: checkpoint " + options.resume_from->string() + " was trained with different model sizes");
    }
    const auto moments = state.optimizer.moments();
    const long taken = state.optimizer.steps_taken();
    state.cfg = cfg;
    state.model.options = MotionOptions{cfg.model.use_versatile, cfg.model.use_sparse_causal};
    state.model.schedule = build_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
    state.optimizer = Adam(state.model.trainable(), adam_config(cfg));
    state.optimizer.restore(moments, taken);
  }

  const NoiseSchedule sched = build_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
  const auto dataset = gen_synthetic_dataset(cfg.dataset_size, cfg.model, cfg.seed + kDatasetSeedOffset);
  if (options.output_dir) fs::create_directories(*options.output_dir);

  while (state.step < cfg.steps) {
    const auto& sample = dataset[static_cast<std::size_t>(state.step) % dataset.size()];
    StepLosses losses = train_step(sample, state.model, state.optimizer, sched, cfg, state.rng);
    losses.step = state.step;
    state.log.push_back(losses);
    ++state.step;
    if (options.on_step) options.on_step(losses);
    if (options.output_dir && state.step % cfg.checkpoint_every == 0) {
      save_checkpoint(*options.output_dir / fmt::format("step_{:06d}", state.step), state);
    }
  }
  if (options.output_dir) {
    save_checkpoint(*options.output_dir / "final", state);
    write_loss_log(*options.output_dir / "loss.csv", state.log);
  }
  return state;
}

// ---- checkpoints ----

void write_loss_log(const fs::path& path, const std::vector<StepLosses>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "step,l_diff,l_con,l_total\n";
  for (const auto& row : log) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", row.step, row.l_diff, row.l_con, row.l_total);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<StepLosses> read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open loss log");
  std::string line;
  if (!std::getline(in, line) || line != "step,l_diff,l_con,l_total") {
    throw FormatError(path.string() + ": bad loss log header");
  }
  std::vector<StepLosses> log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    StepLosses row;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream fields(line);
    if (!(fields >> row.step >> c1 >> row.l_diff >> c2 >> row.l_con >> c3 >> row.l_total) || c1 != ',' ||
        c2 != ',' || c3 != ',') {
      throw FormatError(path.string() + ": bad loss log row '" + line + "'");
    }
    log.push_back(row);
  }
  return log;
}

void save_checkpoint(const fs::path& dir, const TrainingState& state) {
  fs::create_directories(dir);
  std::vector<std::pair<std::string, NamedTensors>> groups{
      {"frozen", state.model.frozen()},
      {"trainable", state.model.trainable()},
      {"optimizer", state.optimizer.moments()},
  };
  std::ofstream manifest(dir / "manifest.txt");
  std::ofstream blobs(dir / "tensors.lmt", std::ios::binary);
  if (!manifest || !blobs) throw std::runtime_error("cannot write checkpoint into " + dir.string());
  for (const auto& [role, tensors] : groups) {
    for (const auto& [name, tensor] : tensors) {
      manifest << name << ' ' << role << ' ' << shape_token(tensor.shape()) << '\n';
      write_tensor(blobs, tensor);
    }
  }
  if (!manifest || !blobs) throw std::runtime_error("failed writing checkpoint into " + dir.string());

  std::ostringstream rng_state;
  rng_state << state.rng;
  json meta{{"config", json::parse(config_to_json(state.cfg))},
            {"step", state.step},
            {"optimizer_steps", state.optimizer.steps_taken()},
            {"rng", rng_state.str()}};
  std::ofstream meta_out(dir / "state.json");
  meta_out << meta.dump(2) << '\n';
  if (!meta_out) throw std::runtime_error("failed writing " + (dir / "state.json").string());
  write_loss_log(dir / "loss.csv", state.log);
}

TrainingState load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + ": checkpoint directory not found");
  json meta;
  {
    std::ifstream in(dir / "state.json");
    if (!in) throw FormatError((dir / "state.json").string() + ": missing");
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError((dir / "state.json").string() + ": " + e.what());
    }
  }
  TrainConfig cfg;
  int step = 0;
  long optimizer_steps = 0;
  std::string rng_text;
  try {
    cfg = parse_config(meta.at("config").dump());
    step = meta.at("step").get<int>();
    optimizer_steps = meta.at("optimizer_steps").get<long>();
    rng_text = meta.at("rng").get<std::string>();
  } catch (const std::exception& e) {
    throw FormatError((dir / "state.json").string() + ": " + e.what());
  }

  std::ifstream manifest(dir / "manifest.txt");
  std::ifstream blobs(dir / "tensors.lmt", std::ios::binary);
  if (!manifest || !blobs) throw FormatError(dir.string() + ": missing manifest.txt or tensors.lmt");
  std::map<std::string, Tensor> stored;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, role, shape;
    if (!(fields >> name >> role >> shape)) throw FormatError("checkpoint manifest: bad line '" + line + "'");
    Tensor t;
    try {
      t = read_tensor(blobs);
    } catch (const FormatError& e) {
      throw FormatError((dir / "tensors.lmt").string() + ": " + e.what());
    }
    if (t.shape() != parse_shape_token(shape)) {
      throw FormatError("checkpoint: tensor '" + name + "' does not match its manifest shape");
    }
    stored.emplace(name, std::move(t));
  }
  if (blobs.peek() != std::char_traits<char>::eof()) {
    throw FormatError((dir / "tensors.lmt").string() + ": trailing data after last manifest entry");
  }

  TrainingState state = init_training(cfg);
  assign_from(state.model.frozen(), stored);
  assign_from(state.model.trainable(), stored);
  state.optimizer.restore(
      [&] {
        NamedTensors moments;
        for (const auto& [name, t] : stored) {
          if (name.rfind("adam.", 0) == 0) moments.emplace_back(name, t);
        }
        return moments;
      }(),
      optimizer_steps);
  std::istringstream rng_in(rng_text);
  rng_in >> state.rng;
  if (!rng_in) throw FormatError((dir / "state.json").string() + ": bad rng state");
  state.step = step;
  state.log = fs::exists(dir / "loss.csv") ? read_loss_log(dir / "loss.csv") : std::vector<StepLosses>{};
  if (static_cast<int>(state.log.size()) != step) {
    throw FormatError(dir.string() + ": loss log has " + std::to_string(state.log.size()) + " rows for step " +
                      std::to_string(step));
  }
  return state;
}

// ---- inference ----

Tensor sample_latent(const TrainConfig& cfg, const Model& model, int cond_id, int sampling_steps, std::uint64_t seed) {
  const NoiseSchedule sched = build_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
  std::mt19937_64 rng(seed);
  const Tensor z_T = draw_video_noise(cfg.model.latent_shape(), rng);
  const Denoiser denoiser = [&model](const Tensor& z, int t, int cond) { return predict_noise(model, z, t, cond); };
  return ddim_sample(denoiser, z_T, sampling_steps, cond_id, sched);
}

std::vector<Tensor> latents_to_frames(const Tensor& latent) {
  if (latent.rank() != 5 || latent.dim(0) != 1) {
    throw DimensionError("latents_to_frames: expected [1, c, N, h, w], got " + shape_to_string(latent.shape()));
  }
  const std::size_t c = latent.dim(1), n = latent.dim(2), h = latent.dim(3), w = latent.dim(4);
  const std::size_t hw = h * w;
  std::vector<std::vector<double>> means(n, std::vector<double>(hw, 0.0));
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t f = 0; f < n; ++f) {
      const double* src = latent.data().data() + (k * n + f) * hw;
      for (std::size_t p = 0; p < hw; ++p) means[f][p] += src[p] / static_cast<double>(c);
    }
  }
  double lo = means[0][0], hi = means[0][0];
  for (const auto& frame : means) {
    const auto [mn, mx] = std::minmax_element(frame.begin(), frame.end());
    lo = std::min(lo, *mn);
    hi = std::max(hi, *mx);
  }
  const double span = hi - lo;
  std::vector<Tensor> frames;
  frames.reserve(n);
  for (auto& frame : means) {
    for (double& v : frame) v = span > 0.0 ? (v - lo) / span : 0.5;
    frames.emplace_back(Shape{h, w}, std::move(frame));
  }
  return frames;
}

std::vector<Tensor> sample_video(const TrainConfig& cfg, const Model& model, int cond_id, int sampling_steps,
                                 std::uint64_t seed) {
  return interpolate_sequence(latents_to_frames(sample_latent(cfg, model, cond_id, sampling_steps, seed)));
}

double eval_temporal_consistency(const std::vector<Tensor>& frames) {
  if (frames.size() < 2) throw ContractError("eval_temporal_consistency: need at least 2 frames");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) total += cosine_sim(frames[i].data(), frames[i + 1].data());
  return total / static_cast<double>(frames.size() - 1);
}

}  // namespace motiondiff
