#pragma once

#include <map>
#include <string>
#include <string_view>

#include "ana/scene.hpp"
#include "ana/train.hpp"

namespace ana {

/// Plain `key = value` settings. `#` starts a comment; blank lines are
/// ignored. Later assignments of a key replace earlier ones.
class Settings {
 public:
  /// Throws ParseError (with line number) on a line without '=' or an empty key.
  static Settings parse(std::string_view text);
  /// Throws ConfigError if the file cannot be read.
  static Settings load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Keys understood by apply(); anything else is a ConfigError.
///
///   scene: n, outlier_ratio, motion_count, outlier_mode (uniform|shuffled),
///          max_rotation, baseline, min_depth, max_depth, noise_px, sigma,
///          focal, cx, cy, width, height, seed
///   net:   layers, dim, heads, soc_form, value_mode (projected|raw),
///          context_norm (true|false)
///   train: learning_rate, steps, balance (balanced|none), beta1, beta2,
///          epsilon, seed
void apply(const Settings& s, SceneConfig& scene);
void apply(const Settings& s, NetConfig& net);
void apply(const Settings& s, TrainConfig& train);

/// Throws ConfigError naming the first key no section recognizes.
void reject_unknown_keys(const Settings& s);

}  // namespace ana
