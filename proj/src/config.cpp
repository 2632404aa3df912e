#include "motiondiff/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "motiondiff/errors.hpp"

namespace motiondiff {

namespace {

using nlohmann::json;

// One entry per accepted key: how to read it and how to write it back.
struct Field {
  std::function<void(TrainConfig&, const json&)> read;
  std::function<json(const TrainConfig&)> write;
};

// json's get<> converts between number kinds silently; reject that here.
template <typename T>
T checked_get(const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError("expected a boolean");
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError("expected an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError("expected a number");
  } else {
    if (!v.is_string()) throw ConfigError("expected a string");
  }
  return v.get<T>();
}

template <typename T>
Field field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const json& v) { c.*member = checked_get<T>(v); },
          [member](const TrainConfig& c) { return json(c.*member); }};
}

template <typename T>
Field model_field(T ModelConfig::*member) {
  return {[member](TrainConfig& c, const json& v) { c.model.*member = checked_get<T>(v); },
          [member](const TrainConfig& c) { return json(c.model.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table{
      {"T", field(&TrainConfig::timesteps)},
      {"beta_start", field(&TrainConfig::beta_start)},
      {"beta_end", field(&TrainConfig::beta_end)},
      {"tau", field(&TrainConfig::tau)},
      {"m", field(&TrainConfig::negative_threshold)},
      {"lambda_diff", field(&TrainConfig::lambda_diff)},
      {"lambda_con", field(&TrainConfig::lambda_con)},
      {"learning_rate", field(&TrainConfig::learning_rate)},
      {"weight_decay", field(&TrainConfig::weight_decay)},
      {"steps", field(&TrainConfig::steps)},
      {"seed", field(&TrainConfig::seed)},
      {"dataset_size", field(&TrainConfig::dataset_size)},
      {"checkpoint_every", field(&TrainConfig::checkpoint_every)},
      {"checkpoint_dir", field(&TrainConfig::checkpoint_dir)},
      {"output_dir", field(&TrainConfig::output_dir)},
      {"channels", model_field(&ModelConfig::channels)},
      {"frames", model_field(&ModelConfig::frames)},
      {"height", model_field(&ModelConfig::height)},
      {"width", model_field(&ModelConfig::width)},
      {"inner_dim", model_field(&ModelConfig::inner_dim)},
      {"heads", model_field(&ModelConfig::heads)},
      {"layers", model_field(&ModelConfig::layers)},
      {"feature_dim", model_field(&ModelConfig::feature_dim)},
      {"image_hidden", model_field(&ModelConfig::image_hidden)},
      {"time_embed_dim", model_field(&ModelConfig::time_embed_dim)},
      {"num_conditions", model_field(&ModelConfig::num_conditions)},
      {"adapter_hidden", model_field(&ModelConfig::adapter_hidden)},
      {"adapter_embed", model_field(&ModelConfig::adapter_embed)},
      {"use_versatile", model_field(&ModelConfig::use_versatile)},
      {"use_sparse_causal", model_field(&ModelConfig::use_sparse_causal)},
      {"zero_init_out", model_field(&ModelConfig::zero_init_out)},
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(timesteps >= 1, "T must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "need 0 < beta_start <= beta_end < 1");
  require(lambda_diff >= 0.0 && lambda_con >= 0.0, "loss weights must be >= 0");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(steps >= 0, "steps must be >= 0");
  require(dataset_size >= 1, "dataset_size must be >= 1");
  require(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require(model.frames >= 2, "frames must be >= 2");
  contrastive().validate();
}

TrainConfig parse_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  TrainConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("config: unknown key '" + key + "'");
    try {
      it->second.read(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const TrainConfig& cfg) {
  json doc = json::object();
  for (const auto& [key, f] : fields()) doc[key] = f.write(cfg);
  return doc.dump(2);
}

}  // namespace motiondiff
