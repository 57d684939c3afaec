#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "elink/encoder/graph_transformer.hpp"
#include "elink/env/environment.hpp"
#include "elink/kg/split.hpp"
#include "elink/policy/policy_network.hpp"
#include "elink/reward/conve.hpp"

namespace elink {

/// Invalid or inconsistent configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training/evaluation protocol knobs.
struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 0.001;
  std::size_t epochs = 20;
  /// Beam width of the final evaluation.
  std::size_t beam_width = 256;
  /// Beam width of the per-epoch dev evaluation used for model selection.
  std::size_t dev_beam_width = 32;
  /// Caps the dev queries scored per epoch (0 = all).
  std::size_t dev_limit = 0;
  std::uint64_t seed = 0;
  bool use_reward_shaping = true;
  std::size_t threads = 1;
  /// Also train on (t, r⁻¹, h) for every training triple.
  bool inverse_queries = true;
  /// Evaluate inverse test queries (t, r⁻¹, h) as well; off = head direction only.
  bool evaluate_inverse = false;
  /// Hide the queried test fact (and its inverse) from the inference graph.
  bool hide_test_edge = true;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (beam_width < 1 || dev_beam_width < 1) throw ConfigError("beam widths must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

/// Everything the CLI and the experiment drivers need.
struct ExperimentConfig {
  std::string dataset = "generic";
  EncoderConfig encoder;
  PolicyConfig policy;
  EnvConfig env;
  TrainConfig train;
  SplitConfig split;
  ConvEConfig conve;
  ConvETrainOptions conve_train;
  std::filesystem::path data_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path conve_checkpoint;
  /// Raw triple file for `split`.
  std::filesystem::path raw_triples;
  /// `explain`: number of predictions rendered per query and an optional query.
  std::size_t explain_top = 3;
  std::string explain_head, explain_relation;
  /// `eval`: optional JSON output file (stdout otherwise) and evaluated set.
  std::filesystem::path report;
  std::string eval_set = "test";

  void validate() const {
    try {
      encoder.validate();
      policy.validate();
      env.validate();
      conve.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    train.validate();
  }
};

/// One seed drives the split, ConvE pre-training and agent training.
inline void set_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.train.seed = seed;
  cfg.split.seed = seed;
  cfg.conve_train.seed = seed;
}

/// Per-dataset protocol presets: beam width and neighbor-masking fraction.
struct DatasetPreset {
  std::string name;
  std::size_t beam_width;
  double mask_fraction;
};

inline const std::vector<DatasetPreset>& dataset_presets() {
  static const std::vector<DatasetPreset> presets = {
      {"fb15k-237", 256, 0.5},
      {"wn18rr", 256, 0.5},
      {"nell-995", 512, 0.3},
  };
  return presets;
}

inline std::optional<DatasetPreset> find_preset(const std::string& name) {
  for (const auto& p : dataset_presets())
    if (p.name == name) return p;
  return std::nullopt;
}

/// Applies a dataset preset; unknown names are a configuration error.
inline void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  if (name == "generic") {
    cfg.dataset = name;
    return;
  }
  const auto p = find_preset(name);
  if (!p) throw ConfigError("unknown dataset preset '" + name + "' (expected fb15k-237, wn18rr, nell-995 or generic)");
  cfg.dataset = p->name;
  cfg.train.beam_width = p->beam_width;
  cfg.encoder.mask_fraction = p->mask_fraction;
}

/// "key = value" lines; '#' starts a comment. Later keys override earlier ones.
inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source = "<config>") {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

}  // namespace detail

/// Builds a configuration from parsed keys. The dataset preset is applied
/// first so explicit keys always win; unknown keys are rejected.
inline ExperimentConfig make_config(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  if (auto it = kv.find("dataset"); it != kv.end()) apply_preset(cfg, it->second);
  using detail::parse_bool;
  using detail::parse_number;
  for (const auto& [key, value] : kv) {
    auto size = [&] { return parse_number<std::size_t>(key, value); };
    auto real = [&] { return parse_number<double>(key, value); };
    if (key == "dataset") continue;
    else if (key == "dim") cfg.encoder.dim = size();
    else if (key == "heads") cfg.encoder.heads = size();
    else if (key == "layers") cfg.encoder.layers = size();
    else if (key == "ffn_hidden") cfg.encoder.ffn_hidden = size();
    else if (key == "encoder_dropout") cfg.encoder.dropout = real();
    else if (key == "mask_fraction") cfg.encoder.mask_fraction = real();
    else if (key == "lstm_layers") cfg.policy.lstm_layers = size();
    else if (key == "lstm_hidden") cfg.policy.lstm_hidden = size();
    else if (key == "mlp_hidden") cfg.policy.mlp_hidden = size();
    else if (key == "rollouts") cfg.policy.rollouts = size();
    else if (key == "entropy_weight") cfg.policy.entropy_weight = real();
    else if (key == "use_baseline") cfg.policy.use_baseline = parse_bool(key, value);
    else if (key == "baseline") cfg.policy.baseline = real();
    else if (key == "grad_clip") cfg.policy.grad_clip = real();
    else if (key == "horizon") cfg.env.horizon = size();
    else if (key == "top_k") cfg.env.top_k = size();
    else if (key == "self_loop") cfg.env.include_self_loop = parse_bool(key, value);
    else if (key == "hide_answer_edge") cfg.env.hide_answer_edge = parse_bool(key, value);
    else if (key == "batch_size") cfg.train.batch_size = size();
    else if (key == "learning_rate") cfg.train.learning_rate = real();
    else if (key == "epochs") cfg.train.epochs = size();
    else if (key == "beam_width") cfg.train.beam_width = size();
    else if (key == "dev_beam_width") cfg.train.dev_beam_width = size();
    else if (key == "dev_limit") cfg.train.dev_limit = size();
    else if (key == "seed") cfg.train.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "use_reward_shaping") cfg.train.use_reward_shaping = parse_bool(key, value);
    else if (key == "threads") cfg.train.threads = size();
    else if (key == "inverse_queries") cfg.train.inverse_queries = parse_bool(key, value);
    else if (key == "evaluate_inverse") cfg.train.evaluate_inverse = parse_bool(key, value);
    else if (key == "hide_test_edge") cfg.train.hide_test_edge = parse_bool(key, value);
    else if (key == "unseen_fraction") cfg.split.unseen_fraction = real();
    else if (key == "dev_fraction") cfg.split.dev_fraction = real();
    else if (key == "conve_embed_dim") cfg.conve.embed_dim = size();
    else if (key == "conve_rows") cfg.conve.rows = size();
    else if (key == "conve_cols") cfg.conve.cols = size();
    else if (key == "conve_channels") cfg.conve.channels = size();
    else if (key == "conve_label_smoothing") cfg.conve.label_smoothing = real();
    else if (key == "conve_input_dropout") cfg.conve.input_dropout = real();
    else if (key == "conve_feature_dropout") cfg.conve.feature_dropout = real();
    else if (key == "conve_hidden_dropout") cfg.conve.hidden_dropout = real();
    else if (key == "conve_epochs") cfg.conve_train.epochs = size();
    else if (key == "conve_batch_size") cfg.conve_train.batch_size = size();
    else if (key == "conve_learning_rate") cfg.conve_train.learning_rate = real();
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "checkpoint") cfg.checkpoint = value;
    else if (key == "conve_checkpoint") cfg.conve_checkpoint = value;
    else if (key == "raw_triples") cfg.raw_triples = value;
    else if (key == "explain_top") cfg.explain_top = size();
    else if (key == "explain_head") cfg.explain_head = value;
    else if (key == "explain_relation") cfg.explain_relation = value;
    else if (key == "report") cfg.report = value;
    else if (key == "eval_set") cfg.eval_set = value;
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (cfg.eval_set != "test" && cfg.eval_set != "dev") throw ConfigError("eval_set must be 'test' or 'dev'");
  set_seed(cfg, cfg.train.seed);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return make_config(parse_key_values(in, path.string()));
}

}  // namespace elink
