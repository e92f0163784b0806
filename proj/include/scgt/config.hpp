#pragma once

// Run configuration: every tunable of the tool in one flat `section.key = value`
// text format. Lines starting with '#' are comments. Unknown keys are rejected.
// The resolved configuration (defaults applied) serialises back to the same
// format, so any run can be replayed from its output directory.

#include "scgt/core.hpp"
#include "scgt/model.hpp"
#include "scgt/synth.hpp"
#include "scgt/train.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace scgt {

struct GradCheckConfig {
  int n_nodes = 4;
  std::vector<int> layer_dims{4, 4};
  int n_heads = 2;
  int k_r = 2;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct InterpretConfig {
  std::string checkpoint;
  int layer = 0;
  /// "mean": encodings of the dataset-mean FC graph; "reference": one subject's.
  std::string source = "mean";
  /// Subject id for source = reference; empty picks the first manifest row.
  std::string reference_subject;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthSpec synth;
  GradCheckConfig gradcheck;
  InterpretConfig interpret;
  std::string manifest;
  double threshold = 0.0;
  /// Run every fold iteration instead of only `train.fold`.
  bool all_folds = false;
  int fold = 0;
  std::string out = "run";
};

namespace detail {

inline std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    out = static_cast<T>(std::strtod(v.c_str(), &end));
    if (v.empty() || end != v.c_str() + v.size()) throw ValidationError(key + ": '" + v + "' is not a number");
  } else {
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ValidationError(key + ": '" + v + "' is not an integer");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(key + ": '" + v + "' is not a boolean");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  return out;
}

inline std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SCGT_NUM(NAME, FIELD, TYPE)                                                            \
  Key {                                                                                        \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_number<TYPE>(NAME, v); }, \
        [](const RunConfig& c) { return format_double(static_cast<double>(c.FIELD)); }       \
  }
#define SCGT_INT(NAME, FIELD, TYPE)                                                            \
  Key {                                                                                        \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_number<TYPE>(NAME, v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                           \
  }
#define SCGT_BOOL(NAME, FIELD)                                                           \
  Key {                                                                                  \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); },   \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }     \
  }
#define SCGT_STR(NAME, FIELD)                                                   \
  Key {                                                                         \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = v; },             \
        [](const RunConfig& c) { return c.FIELD; }                             \
  }
#define SCGT_LIST(NAME, FIELD)                                                                \
  Key {                                                                                       \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_int_list(NAME, v); },    \
        [](const RunConfig& c) { return join(c.FIELD); }                                    \
  }

inline const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      SCGT_LIST("model.layer_dims", model.layer_dims),
      SCGT_INT("model.n_heads", model.n_heads, int),
      SCGT_INT("model.k_r", model.k_r, int),
      Key{"model.task", [](RunConfig& c, const std::string& v) { c.model.task = parse_task(v); },
          [](const RunConfig& c) { return std::string(to_string(c.model.task)); }},
      Key{"model.mode", [](RunConfig& c, const std::string& v) { c.model.mode = parse_mode(v); },
          [](const RunConfig& c) { return std::string(to_string(c.model.mode)); }},
      SCGT_BOOL("model.tie_theta1", model.tie_theta1),

      SCGT_STR("data.manifest", manifest),
      SCGT_NUM("data.threshold", threshold, double),

      SCGT_INT("train.epochs", train.epochs, int),
      SCGT_INT("train.batch_size", train.batch_size, int),
      SCGT_NUM("train.lr", train.lr, double),
      SCGT_NUM("train.beta1", train.adam.beta1, double),
      SCGT_NUM("train.beta2", train.adam.beta2, double),
      SCGT_NUM("train.eps", train.adam.eps, double),
      SCGT_NUM("train.plateau_factor", train.plateau_factor, double),
      SCGT_INT("train.plateau_patience", train.plateau_patience, int),
      SCGT_INT("train.early_stop_patience", train.early_stop_patience, int),
      SCGT_INT("train.folds", train.folds, int),
      SCGT_INT("train.fold", fold, int),
      SCGT_BOOL("train.all_folds", all_folds),
      SCGT_NUM("train.smooth_l1_delta", train.smooth_l1_delta, double),
      SCGT_INT("train.seed", train.seed, std::uint64_t),
      SCGT_BOOL("train.pe_sign_flip", train.pe_sign_flip),
      SCGT_BOOL("train.standardize_targets", train.standardize_targets),
      SCGT_BOOL("train.residualize", train.residualize),
      SCGT_INT("train.threads", train.threads, unsigned),

      SCGT_INT("synth.n_nodes", synth.n_nodes, int),
      SCGT_INT("synth.k_true", synth.k_true, int),
      SCGT_LIST("synth.community_sizes", synth.community_sizes),
      SCGT_NUM("synth.rho_in", synth.rho_in, double),
      SCGT_NUM("synth.rho_out", synth.rho_out, double),
      SCGT_NUM("synth.rho_in_sd", synth.rho_in_sd, double),
      SCGT_INT("synth.t_len", synth.t_len, int),
      SCGT_INT("synth.n_subjects", synth.n_subjects, int),
      Key{"synth.task", [](RunConfig& c, const std::string& v) { c.synth.task = parse_task(v); },
          [](const RunConfig& c) { return std::string(to_string(c.synth.task)); }},
      SCGT_NUM("synth.signal_strength", synth.signal_strength, double),
      SCGT_NUM("synth.noise_sd", synth.noise_sd, double),
      SCGT_INT("synth.seed", synth.seed, std::uint64_t),

      SCGT_INT("gradcheck.n_nodes", gradcheck.n_nodes, int),
      SCGT_LIST("gradcheck.layer_dims", gradcheck.layer_dims),
      SCGT_INT("gradcheck.n_heads", gradcheck.n_heads, int),
      SCGT_INT("gradcheck.k_r", gradcheck.k_r, int),
      SCGT_NUM("gradcheck.tolerance", gradcheck.tolerance, double),
      SCGT_INT("gradcheck.seed", gradcheck.seed, std::uint64_t),

      SCGT_STR("interpret.checkpoint", interpret.checkpoint),
      SCGT_INT("interpret.layer", interpret.layer, int),
      SCGT_STR("interpret.source", interpret.source),
      SCGT_STR("interpret.reference_subject", interpret.reference_subject),

      SCGT_STR("run.out", out),
  };
  return table;
}

#undef SCGT_NUM
#undef SCGT_INT
#undef SCGT_BOOL
#undef SCGT_STR
#undef SCGT_LIST

}  // namespace detail

/// Sets one key. Throws ValidationError for unknown keys or malformed values.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : detail::keys()) {
    if (k.name == key) {
      k.set(cfg, detail::trim(value));
      return;
    }
  }
  throw ValidationError("unknown config key '" + key + "'");
}

/// Applies `key=value` (or `key = value`).
inline void apply_assignment(RunConfig& cfg, std::string_view line, const std::string& where = "") {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) throw ValidationError(where + "expected 'key = value', got '" + std::string(line) + "'");
  try {
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
}

inline void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& name = "config") {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    apply_assignment(cfg, t, name + ":" + std::to_string(lineno) + ": ");
  }
}

inline void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  apply_config_text(cfg, in, path.string());
}

/// Every key with its current value, one `key = value` per line.
inline std::string resolved_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : detail::keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const auto& k : detail::keys()) names.push_back(k.name);
  return names;
}

}  // namespace scgt
