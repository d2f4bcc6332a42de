#include "ana/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "ana/errors.hpp"

namespace ana {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("key '" + key + "': cannot parse '" + text + "' as a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

class Reader {
 public:
  explicit Reader(const Settings& s) : s_(s) {}

  template <typename T>
  void number(const std::string& key, T& out) const {
    if (auto it = s_.values().find(key); it != s_.values().end()) out = parse_number<T>(key, it->second);
  }
  void flag(const std::string& key, bool& out) const {
    if (auto it = s_.values().find(key); it != s_.values().end()) out = parse_bool(key, it->second);
  }
  template <typename F>
  void with(const std::string& key, F&& f) const {
    if (auto it = s_.values().find(key); it != s_.values().end()) f(it->second);
  }

 private:
  const Settings& s_;
};

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "n",        "outlier_ratio", "motion_count", "outlier_mode", "max_rotation", "baseline",
      "min_depth", "max_depth",    "noise_px",     "sigma",        "focal",        "cx",
      "cy",       "width",         "height",       "seed",         "layers",       "dim",
      "heads",    "soc_form",      "value_mode",   "context_norm", "learning_rate", "steps",
      "balance",  "beta1",         "beta2",        "epsilon"};
  return keys;
}

}  // namespace

Settings Settings::parse(std::string_view text) {
  Settings s;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    s.set(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return s;
}

Settings Settings::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const ParseError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void apply(const Settings& s, SceneConfig& c) {
  const Reader r(s);
  r.number("n", c.n);
  r.number("outlier_ratio", c.outlier_ratio);
  r.number("motion_count", c.motion_count);
  r.with("outlier_mode", [&](const std::string& v) {
    if (v == "uniform") c.outlier_mode = OutlierMode::uniform;
    else if (v == "shuffled") c.outlier_mode = OutlierMode::shuffled;
    else throw ConfigError("key 'outlier_mode': expected uniform or shuffled, got '" + v + "'");
  });
  r.number("max_rotation", c.max_rotation);
  r.number("baseline", c.baseline);
  r.number("min_depth", c.min_depth);
  r.number("max_depth", c.max_depth);
  r.number("noise_px", c.noise_px);
  r.number("sigma", c.sigma);
  r.number("focal", c.camera.focal);
  r.number("cx", c.camera.cx);
  r.number("cy", c.camera.cy);
  r.number("width", c.camera.width);
  r.number("height", c.camera.height);
  r.number("seed", c.seed);
  c.validate();
}

void apply(const Settings& s, NetConfig& c) {
  const Reader r(s);
  r.number("layers", c.layers);
  r.number("dim", c.dim);
  r.number("heads", c.heads);
  r.with("soc_form", [&](const std::string& v) { c.soc_form = parse_soc_form(v); });
  r.with("value_mode", [&](const std::string& v) {
    if (v == "projected") c.value_mode = ValueMode::projected;
    else if (v == "raw") c.value_mode = ValueMode::raw;
    else throw ConfigError("key 'value_mode': expected projected or raw, got '" + v + "'");
  });
  r.flag("context_norm", c.context_norm);
  c.validate();
}

void apply(const Settings& s, TrainConfig& c) {
  apply(s, c.net);
  const Reader r(s);
  r.number("learning_rate", c.learning_rate);
  r.number("steps", c.steps);
  r.number("seed", c.seed);
  r.with("balance", [&](const std::string& v) {
    if (v == "balanced") c.balance = LossBalance::balanced;
    else if (v == "none") c.balance = LossBalance::none;
    else throw ConfigError("key 'balance': expected balanced or none, got '" + v + "'");
  });
  r.number("beta1", c.beta1);
  r.number("beta2", c.beta2);
  r.number("epsilon", c.epsilon);
  c.validate();
}

void reject_unknown_keys(const Settings& s) {
  for (const auto& [key, value] : s.values())
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace ana
