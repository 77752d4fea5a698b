#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfm/actor.hpp"
#include "sfm/env.hpp"
#include "sfm/features.hpp"
#include "sfm/sf_net.hpp"
#include "sfm/trainer.hpp"

namespace sfm {

inline constexpr const char* kVersion = "sfm-0.1.0";

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value experiment configuration; dotted keys act as sections.
// Unknown keys are rejected and every numeric key is range-checked.
struct ExperimentConfig {
  std::string env = "pointmass";
  int env_horizon = 0;  // 0 keeps the environment default
  double env_noise = 0.0;
  FeatureKind features_kind = FeatureKind::Fdm;
  int features_dim = 32;
  std::string demos_path = "demos.json";
  int demos_count = 1;
  bool demos_state_only = true;
  ActorKind actor_kind = ActorKind::Deterministic;
  SfMode sf_mode = SfMode::Td7;
  std::vector<int> seeds = {0};
  int64_t steps = 60000;
  int64_t warmup_steps = 1000;
  int batch_size = 256;
  int64_t buffer_capacity = 100000;
  double gamma = 0.99;
  double lr_actor = 5e-4;
  double lr_sf = 5e-4;
  double lr_features = 5e-4;
  double action_noise = 0.1;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  int update_interval = 250;
  double polyak_alpha = 0.995;
  double entropy_coeff = 1e-3;
  double feature_tau = 0.9;
  double ema_rate = 0.01;
  bool witness_normalize = false;
  double witness_bound = 1.0;
  int hidden = 64;
  int64_t eval_interval = 2000;
  int eval_episodes = 10;

  void set_key(const std::string& key, const std::string& raw);
  std::string get_key(const std::string& key) const;
  static const std::vector<std::string>& known_keys();

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
  void apply_json_overrides(const std::string& json_text);
  std::string serialize() const;  // canonical: alphabetical keys
  uint64_t hash() const { return hash_bytes(serialize().data(), serialize().size()); }

  TrainerConfig trainer_config() const {
    TrainerConfig t;
    t.steps = steps;
    t.warmup_steps = warmup_steps;
    t.batch_size = batch_size;
    t.buffer_capacity = static_cast<size_t>(buffer_capacity);
    t.gamma = gamma;
    t.lr_actor = lr_actor;
    t.lr_sf = lr_sf;
    t.lr_features = lr_features;
    t.action_noise = action_noise;
    t.target_noise = target_noise;
    t.target_noise_clip = target_noise_clip;
    t.hidden = hidden;
    t.features_dim = features_dim;
    t.features_kind = features_kind;
    t.actor_kind = actor_kind;
    t.sf_mode = sf_mode;
    t.update_interval = update_interval;
    t.polyak_alpha = polyak_alpha;
    t.entropy_coeff = entropy_coeff;
    t.feature_tau = feature_tau;
    t.ema_rate = ema_rate;
    t.witness_normalize = witness_normalize;
    t.witness_bound = witness_bound;
    t.eval_interval = eval_interval;
    t.eval_episodes = eval_episodes;
    return t;
  }

  std::unique_ptr<ContinuousEnv> make_environment() const {
    return make_env(env, env_horizon, env_noise);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v, double lo, double hi,
                           bool lo_open = false, bool hi_open = false) {
  size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (...) {
    throw ConfigError("config key '" + key + "': not a number: " + v);
  }
  if (pos != v.size()) throw ConfigError("config key '" + key + "': not a number: " + v);
  const bool ok = (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
  if (!ok)
    throw ConfigError("config key '" + key + "': value " + v + " out of range");
  return x;
}

inline int64_t parse_int(const std::string& key, const std::string& v, int64_t lo, int64_t hi) {
  size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (...) {
    throw ConfigError("config key '" + key + "': not an integer: " + v);
  }
  if (pos != v.size()) throw ConfigError("config key '" + key + "': not an integer: " + v);
  if (x < lo || x > hi) throw ConfigError("config key '" + key + "': value out of range");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got " + v);
}

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

inline const std::vector<std::string>& ExperimentConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "action_noise", "actor.kind", "batch_size", "buffer_capacity", "demos.count",
      "demos.path", "demos.state_only", "ema_rate", "entropy_coeff", "env", "env.horizon",
      "env.noise", "eval.episodes", "eval.interval", "feature_tau", "features.dim",
      "features.kind", "gamma", "hidden", "lr.actor", "lr.features", "lr.sf",
      "polyak_alpha", "seeds", "sf.mode", "steps", "target_noise", "target_noise_clip",
      "update_interval", "warmup_steps", "witness.bound", "witness.normalize"};
  return keys;
}

inline void ExperimentConfig::set_key(const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = trim(raw);
  if (key == "env") {
    if (v != "gridworld" && v != "pointmass") throw ConfigError("unknown environment: " + v);
    env = v;
  } else if (key == "env.horizon") {
    env_horizon = static_cast<int>(parse_int(key, v, 0, 200));
  } else if (key == "env.noise") {
    env_noise = parse_double(key, v, 0.0, 1.0);
  } else if (key == "features.kind") {
    try {
      features_kind = feature_kind_from_string(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "features.dim") {
    features_dim = static_cast<int>(parse_int(key, v, 1, 1024));
  } else if (key == "demos.path") {
    demos_path = v;
  } else if (key == "demos.count") {
    demos_count = static_cast<int>(parse_int(key, v, 1, 1000));
  } else if (key == "demos.state_only") {
    demos_state_only = parse_bool(key, v);
  } else if (key == "actor.kind") {
    try {
      actor_kind = actor_kind_from_string(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "sf.mode") {
    try {
      sf_mode = sf_mode_from_string(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "seeds") {
    seeds.clear();
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (!tok.empty()) seeds.push_back(static_cast<int>(parse_int(key, tok, 0, 1 << 30)));
    }
    if (seeds.empty()) throw ConfigError("config key 'seeds': empty list");
  } else if (key == "steps") {
    steps = parse_int(key, v, 0, 100000000);
  } else if (key == "warmup_steps") {
    warmup_steps = parse_int(key, v, 0, 100000000);
  } else if (key == "batch_size") {
    batch_size = static_cast<int>(parse_int(key, v, 1, 65536));
  } else if (key == "buffer_capacity") {
    buffer_capacity = parse_int(key, v, 1, 100000000);
  } else if (key == "gamma") {
    gamma = parse_double(key, v, 0.0, 1.0, false, true);
  } else if (key == "lr.actor") {
    lr_actor = parse_double(key, v, 0.0, 1.0, true);
  } else if (key == "lr.sf") {
    lr_sf = parse_double(key, v, 0.0, 1.0, true);
  } else if (key == "lr.features") {
    lr_features = parse_double(key, v, 0.0, 1.0, true);
  } else if (key == "action_noise") {
    action_noise = parse_double(key, v, 0.0, 2.0);
  } else if (key == "target_noise") {
    target_noise = parse_double(key, v, 0.0, 2.0);
  } else if (key == "target_noise_clip") {
    target_noise_clip = parse_double(key, v, 0.0, 2.0);
  } else if (key == "update_interval") {
    update_interval = static_cast<int>(parse_int(key, v, 1, 1000000));
  } else if (key == "polyak_alpha") {
    polyak_alpha = parse_double(key, v, 0.0, 1.0, false, true);
  } else if (key == "entropy_coeff") {
    entropy_coeff = parse_double(key, v, 0.0, 10.0);
  } else if (key == "feature_tau") {
    feature_tau = parse_double(key, v, 0.0, 1.0, true, true);
  } else if (key == "ema_rate") {
    ema_rate = parse_double(key, v, 0.0, 1.0, true);
  } else if (key == "witness.normalize") {
    witness_normalize = parse_bool(key, v);
  } else if (key == "witness.bound") {
    witness_bound = parse_double(key, v, 0.0, 1e6, true);
  } else if (key == "hidden") {
    hidden = static_cast<int>(parse_int(key, v, 1, 4096));
  } else if (key == "eval.interval") {
    eval_interval = parse_int(key, v, 1, 100000000);
  } else if (key == "eval.episodes") {
    eval_episodes = static_cast<int>(parse_int(key, v, 1, 10000));
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

inline std::string ExperimentConfig::get_key(const std::string& key) const {
  using detail::format_double;
  if (key == "env") return env;
  if (key == "env.horizon") return std::to_string(env_horizon);
  if (key == "env.noise") return format_double(env_noise);
  if (key == "features.kind") return to_string(features_kind);
  if (key == "features.dim") return std::to_string(features_dim);
  if (key == "demos.path") return demos_path;
  if (key == "demos.count") return std::to_string(demos_count);
  if (key == "demos.state_only") return demos_state_only ? "true" : "false";
  if (key == "actor.kind") return to_string(actor_kind);
  if (key == "sf.mode") return to_string(sf_mode);
  if (key == "seeds") {
    std::string s;
    for (size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
    return s;
  }
  if (key == "steps") return std::to_string(steps);
  if (key == "warmup_steps") return std::to_string(warmup_steps);
  if (key == "batch_size") return std::to_string(batch_size);
  if (key == "buffer_capacity") return std::to_string(buffer_capacity);
  if (key == "gamma") return format_double(gamma);
  if (key == "lr.actor") return format_double(lr_actor);
  if (key == "lr.sf") return format_double(lr_sf);
  if (key == "lr.features") return format_double(lr_features);
  if (key == "action_noise") return format_double(action_noise);
  if (key == "target_noise") return format_double(target_noise);
  if (key == "target_noise_clip") return format_double(target_noise_clip);
  if (key == "update_interval") return std::to_string(update_interval);
  if (key == "polyak_alpha") return format_double(polyak_alpha);
  if (key == "entropy_coeff") return format_double(entropy_coeff);
  if (key == "feature_tau") return format_double(feature_tau);
  if (key == "ema_rate") return format_double(ema_rate);
  if (key == "witness.normalize") return witness_normalize ? "true" : "false";
  if (key == "witness.bound") return format_double(witness_bound);
  if (key == "hidden") return std::to_string(hidden);
  if (key == "eval.interval") return std::to_string(eval_interval);
  if (key == "eval.episodes") return std::to_string(eval_episodes);
  throw ConfigError("unknown config key: " + key);
}

inline ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    cfg.set_key(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse(buf.str());
}

inline void ExperimentConfig::apply_json_overrides(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad JSON override: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("JSON override must be an object");
  for (const auto& [key, value] : j.items()) {
    std::string v;
    if (value.is_string()) {
      v = value.get<std::string>();
    } else if (value.is_boolean()) {
      v = value.get<bool>() ? "true" : "false";
    } else if (value.is_number_integer()) {
      v = std::to_string(value.get<long long>());
    } else if (value.is_number_float()) {
      v = detail::format_double(value.get<double>());
    } else {
      throw ConfigError("JSON override key '" + key + "': unsupported value type");
    }
    set_key(key, v);
  }
}

inline std::string ExperimentConfig::serialize() const {
  std::string out;
  for (const auto& key : known_keys()) out += key + " = " + get_key(key) + "\n";
  return out;
}

struct RunManifest {
  std::string config_hash;
  int seed = 0;
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::string> outputs;
  std::string version = kVersion;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["outputs"] = outputs;
    j["version"] = version;
    return j;
  }
};

inline std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string iso_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace sfm
