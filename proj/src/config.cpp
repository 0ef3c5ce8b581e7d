#include "glass/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace glass {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// strips a trailing comment that is not inside a string literal
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

TomlTable::Value parse_scalar(const std::string& raw, int lineno) {
  std::string v = trim(raw);
  if (v.empty()) throw ConfigError("config line " + std::to_string(lineno) +
                                   ": empty value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unterminated string");
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  bool is_float = v.find_first_of(".eE") != std::string::npos &&
                  v.find_first_not_of("+-0123456789.eE") == std::string::npos;
  try {
    size_t used = 0;
    if (is_float) {
      double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } else {
      int64_t i = std::stoll(v, &used);
      if (used == v.size()) return i;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config line " + std::to_string(lineno) +
                    ": cannot parse value '" + v + "'");
}

TomlTable::Value parse_array(const std::string& inner, int lineno) {
  std::vector<std::string> items;
  std::string cur;
  bool in_str = false;
  for (char c : inner) {
    if (c == '"') in_str = !in_str;
    if (c == ',' && !in_str) {
      items.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) items.push_back(cur);
  std::vector<double> nums;
  std::vector<std::string> strs;
  bool any_str = false, any_num = false;
  for (const auto& item : items) {
    TomlTable::Value v = parse_scalar(item, lineno);
    if (std::holds_alternative<std::string>(v)) {
      any_str = true;
      strs.push_back(std::get<std::string>(v));
    } else if (std::holds_alternative<int64_t>(v)) {
      any_num = true;
      nums.push_back((double)std::get<int64_t>(v));
    } else if (std::holds_alternative<double>(v)) {
      any_num = true;
      nums.push_back(std::get<double>(v));
    } else {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unsupported array element");
    }
  }
  if (any_str && any_num)
    throw ConfigError("config line " + std::to_string(lineno) +
                      ": mixed array types");
  if (any_str) return strs;
  return nums;
}

}  // namespace

TomlTable TomlTable::parse(const std::string& text) {
  TomlTable t;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty section name");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    std::string full = section.empty() ? key : section + "." + key;
    if (t.values_.count(full))
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": duplicate key '" + full + "'");
    if (!val.empty() && val.front() == '[') {
      if (val.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unterminated array");
      t.values_[full] = parse_array(val.substr(1, val.size() - 2), lineno);
    } else {
      t.values_[full] = parse_scalar(val, lineno);
    }
  }
  return t;
}

TomlTable TomlTable::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::vector<std::string> TomlTable::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

const TomlTable::Value* TomlTable::find(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string TomlTable::get_string(const std::string& key) const {
  const Value* v = find(key);
  if (!v) throw ConfigError("missing required config key: " + key);
  if (!std::holds_alternative<std::string>(*v))
    throw ConfigError("config key " + key + " must be a string");
  return std::get<std::string>(*v);
}

std::string TomlTable::get_string(const std::string& key,
                                  const std::string& dflt) const {
  return find(key) ? get_string(key) : dflt;
}

int64_t TomlTable::get_int(const std::string& key) const {
  const Value* v = find(key);
  if (!v) throw ConfigError("missing required config key: " + key);
  if (!std::holds_alternative<int64_t>(*v))
    throw ConfigError("config key " + key + " must be an integer");
  return std::get<int64_t>(*v);
}

int64_t TomlTable::get_int(const std::string& key, int64_t dflt) const {
  return find(key) ? get_int(key) : dflt;
}

double TomlTable::get_double(const std::string& key) const {
  const Value* v = find(key);
  if (!v) throw ConfigError("missing required config key: " + key);
  if (std::holds_alternative<int64_t>(*v))
    return (double)std::get<int64_t>(*v);
  if (std::holds_alternative<double>(*v)) return std::get<double>(*v);
  throw ConfigError("config key " + key + " must be a number");
}

double TomlTable::get_double(const std::string& key, double dflt) const {
  return find(key) ? get_double(key) : dflt;
}

bool TomlTable::get_bool(const std::string& key, bool dflt) const {
  const Value* v = find(key);
  if (!v) return dflt;
  if (!std::holds_alternative<bool>(*v))
    throw ConfigError("config key " + key + " must be a boolean");
  return std::get<bool>(*v);
}

std::vector<double> TomlTable::get_doubles(
    const std::string& key, const std::vector<double>& dflt) const {
  const Value* v = find(key);
  if (!v) return dflt;
  if (!std::holds_alternative<std::vector<double>>(*v))
    throw ConfigError("config key " + key + " must be a number array");
  return std::get<std::vector<double>>(*v);
}

ExperimentConfig ExperimentConfig::from_toml(const TomlTable& t) {
  ExperimentConfig c;
  if (!t.has("seed")) throw ConfigError("missing required config key: seed");
  c.seed = (uint64_t)t.get_int("seed");
  c.dataset_dir = t.get_string("dataset", "");
  c.eval_dir = t.get_string("eval_dataset", "");
  c.out_dir = t.get_string("out_dir", "");

  c.model.channels = (int)t.get_int("model.channels", c.model.channels);
  auto widths = t.get_doubles("model.widths", {});
  if (!widths.empty()) {
    if (widths.size() != 3)
      throw ConfigError("model.widths must have 3 entries");
    c.model.backbone_widths = {(int)widths[0], (int)widths[1], (int)widths[2]};
  }
  c.model.fusion.channels = c.model.channels;
  c.model.fusion.blocks = (int)t.get_int("model.blocks", c.model.fusion.blocks);
  c.model.score_threshold =
      t.get_double("model.score_threshold", c.model.score_threshold);
  c.model.nms_iou = t.get_double("model.nms_iou", c.model.nms_iou);
  c.model.rec_conv_dim = (int)t.get_int("model.rec_dim", c.model.rec_conv_dim);
  c.model.rec_hidden = (int)t.get_int("model.rec_hidden", c.model.rec_hidden);
  std::string variant = t.get_string("model.variant", "glass");
  try {
    c.model.variant = fusion_variant_from_string(variant);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  c.angle_loss = t.get_string("loss.angle", c.angle_loss);
  if (c.angle_loss != "l1" && c.angle_loss != "sin2")
    throw ConfigError("loss.angle must be 'l1' or 'sin2', got '" +
                      c.angle_loss + "'");
  auto alpha = t.get_doubles("loss.alpha", {});
  if (!alpha.empty()) {
    if (alpha.size() != 4) throw ConfigError("loss.alpha must have 4 entries");
    std::copy(alpha.begin(), alpha.end(), c.weights.alpha.begin());
  }
  c.weights.alpha_theta =
      t.get_double("loss.alpha_theta", c.weights.alpha_theta);
  c.weights.lambda1 = t.get_double("loss.lambda1", c.weights.lambda1);
  c.weights.lambda2 = t.get_double("loss.lambda2", c.weights.lambda2);

  c.optim.lr = t.get_double("optim.lr", c.optim.lr);
  c.optim.momentum = t.get_double("optim.momentum", c.optim.momentum);
  c.optim.steps = (int)t.get_int("optim.steps", c.optim.steps);
  c.optim.batch = (int)t.get_int("optim.batch", c.optim.batch);
  c.optim.decay_every = (int)t.get_int("optim.decay_every", c.optim.decay_every);
  c.optim.decay_factor =
      t.get_double("optim.decay_factor", c.optim.decay_factor);
  c.optim.checkpoint_every =
      (int)t.get_int("optim.checkpoint_every", c.optim.checkpoint_every);

  c.n_scenes = (int)t.get_int("data.scenes", c.n_scenes);
  c.words_per_step = (int)t.get_int("data.words_per_step", c.words_per_step);
  c.scene.width = (int)t.get_int("data.width", c.scene.width);
  c.scene.height = (int)t.get_int("data.height", c.scene.height);
  c.scene.min_words = (int)t.get_int("data.min_words", c.scene.min_words);
  c.scene.max_words = (int)t.get_int("data.max_words", c.scene.max_words);
  c.scene.min_len = (int)t.get_int("data.min_len", c.scene.min_len);
  c.scene.max_len = (int)t.get_int("data.max_len", c.scene.max_len);
  c.scene.min_glyph_height =
      t.get_double("data.min_glyph_height", c.scene.min_glyph_height);
  c.scene.max_glyph_height =
      t.get_double("data.max_glyph_height", c.scene.max_glyph_height);
  c.scene.min_angle = t.get_double("data.min_angle", c.scene.min_angle);
  c.scene.max_angle = t.get_double("data.max_angle", c.scene.max_angle);

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_toml(TomlTable::parse_file(path));
}

void ExperimentConfig::validate() const {
  try {
    model.validate();
    weights.validate();
    scene.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (optim.lr <= 0 || !std::isfinite(optim.lr))
    throw ConfigError("optim.lr must be positive");
  if (optim.momentum < 0 || optim.momentum >= 1)
    throw ConfigError("optim.momentum must be in [0,1)");
  if (optim.steps < 0) throw ConfigError("optim.steps must be >= 0");
  if (optim.batch < 1) throw ConfigError("optim.batch must be >= 1");
  if (optim.checkpoint_every < 1)
    throw ConfigError("optim.checkpoint_every must be >= 1");
  if (n_scenes < 0) throw ConfigError("data.scenes must be >= 0");
  if (words_per_step < 1) throw ConfigError("data.words_per_step must be >= 1");
}

}  // namespace glass
