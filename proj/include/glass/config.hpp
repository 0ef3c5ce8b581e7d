#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "glass/losses.hpp"
#include "glass/model.hpp"
#include "glass/synthdata.hpp"

namespace glass {

// Raised for malformed or invalid configuration; the CLI maps it to exit 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minimal TOML subset: [section] headers, key = value pairs, # comments.
// Values: strings, integers, floats, booleans, flat arrays of numbers or
// strings. Keys are exposed flattened as "section.key".
class TomlTable {
 public:
  using Value = std::variant<bool, int64_t, double, std::string,
                             std::vector<double>, std::vector<std::string>>;

  static TomlTable parse(const std::string& text);
  static TomlTable parse_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::vector<std::string> keys() const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& dflt) const;

  void set(const std::string& key, Value v) { values_[key] = std::move(v); }

 private:
  const Value* find(const std::string& key) const;
  std::map<std::string, Value> values_;
};

struct OptimConfig {
  double lr = 0.05;
  double momentum = 0.9;
  int steps = 500;
  int batch = 4;
  int decay_every = 0;       // 0 disables the step decay
  double decay_factor = 0.1;
  int checkpoint_every = 100;
};

struct ExperimentConfig {
  std::string dataset_dir;
  std::string eval_dir;  // held-out split for ablations; dataset_dir if empty
  std::string out_dir;
  uint64_t seed = 0;
  ModelConfig model;
  LossWeights weights;
  std::string angle_loss = "sin2";  // "l1" or "sin2"
  OptimConfig optim;
  SceneSpec scene;     // used by gen
  int n_scenes = 100;  // used by gen
  int words_per_step = 2;  // gt words supervised per scene per step

  static ExperimentConfig from_toml(const TomlTable& t);
  static ExperimentConfig from_file(const std::string& path);
  void validate() const;
};

}  // namespace glass
