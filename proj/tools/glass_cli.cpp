#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "glass/config.hpp"
#include "glass/runner.hpp"

using namespace glass;

namespace {

std::vector<double> parse_angle_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    size_t used = 0;
    double v = std::stod(item, &used);
    if (used != item.size())
      throw ConfigError("bad angle list entry: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty angle list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glass: desk-scale rotated text spotting pipeline"};
  app.require_subcommand(1);

  std::string spec_file, config_file, out_dir, checkpoint, dataset, axis,
      sweep_list;
  int64_t seed = -1;
  int resume = 0, steps = -1;
  bool oracle_boxes = false, inject_bug = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--spec", spec_file, "scene spec (toml)")->required();
  gen->add_option("--out", out_dir, "output dataset dir")->required();
  gen->add_option("--seed", seed, "seed override");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_file, "experiment config (toml)")
      ->required();
  train->add_option("--resume", resume, "resume from checkpoint step");
  train->add_option("--steps", steps, "step count override");
  train->add_option("--out", out_dir, "output dir override");
  train->add_option("--seed", seed, "seed override");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", config_file, "experiment config (toml)")
      ->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint path prefix")
      ->required();
  eval->add_option("--dataset", dataset, "dataset dir")->required();
  eval->add_option("--out", out_dir, "report output dir")->required();
  eval->add_flag("--oracle-boxes", oracle_boxes,
                 "evaluate with ground-truth boxes");
  eval->add_option("--angle-sweep", sweep_list,
                   "comma-separated sweep angles in degrees");

  auto* ablate = app.add_subcommand("ablate", "train and compare variants");
  ablate->add_option("--config", config_file, "base experiment config (toml)")
      ->required();
  ablate->add_option("--axis", axis, "fusion | angle-loss")->required();

  auto* verify = app.add_subcommand("verify", "run the property suites");
  verify->add_flag("--inject-sin2-bug", inject_bug,
                   "mutation fixture: break the sin2 gradient");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::from_file(spec_file);
      cfg.out_dir = out_dir;
      if (seed >= 0) cfg.seed = (uint64_t)seed;
      GenResult r = run_gen(cfg);
      std::cout << "wrote " << r.scenes << " scenes, " << r.words
                << " word instances to " << cfg.out_dir << "\n";
    } else if (train->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::from_file(config_file);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (seed >= 0) cfg.seed = (uint64_t)seed;
      if (steps >= 0) cfg.optim.steps = steps;
      TrainResult r = run_train(cfg, resume);
      std::cout << "trained " << r.steps << " steps, loss "
                << r.initial_loss << " -> " << r.final_loss << ", checkpoint "
                << r.checkpoint << "\n";
    } else if (eval->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::from_file(config_file);
      EvalOptions opt;
      opt.oracle_boxes = oracle_boxes;
      if (!sweep_list.empty()) opt.sweep_deg = parse_angle_list(sweep_list);
      EvalReport r = run_eval(cfg, checkpoint, dataset, opt, out_dir);
      std::cout << "detection hmean " << r.detection.hmean << ", e2e hmean "
                << r.e2e.hmean << "\n";
    } else if (ablate->parsed()) {
      ExperimentConfig cfg = ExperimentConfig::from_file(config_file);
      std::cout << run_ablate(cfg, axis);
    } else if (verify->parsed()) {
      bool ok = run_verify(std::cout, inject_bug);
      return ok ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
