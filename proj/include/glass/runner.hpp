#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "glass/config.hpp"
#include "glass/eval.hpp"
#include "glass/model.hpp"
#include "glass/synthdata.hpp"

namespace glass {

// Non-finite loss during training; the CLI maps it to exit 3.
struct NumericError : std::runtime_error {
  int step;
  NumericError(int step_, const std::string& msg)
      : std::runtime_error(msg), step(step_) {}
};

struct GenResult {
  int scenes = 0;
  int64_t words = 0;
};
// Generates cfg.n_scenes scenes from cfg.scene with cfg.seed into cfg.out_dir.
GenResult run_gen(const ExperimentConfig& cfg);

struct TrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int steps = 0;
  std::string checkpoint;  // path prefix of the final model checkpoint
};
// Trains on cfg.dataset_dir, writing ck_{step} / state_{step} checkpoint
// pairs and train_log.jsonl under cfg.out_dir. resume_step > 0 continues
// from the matching checkpoint pair and reproduces the from-scratch run
// bit-exactly at every later checkpoint.
TrainResult run_train(const ExperimentConfig& cfg, int resume_step = 0);

struct EvalOptions {
  bool oracle_boxes = false;
  std::vector<double> sweep_deg;  // empty: no sweep
  double iou = 0.5;
};
EvalReport run_eval(const ExperimentConfig& cfg, const std::string& checkpoint,
                    const std::string& dataset_dir, const EvalOptions& opt,
                    const std::string& out_dir);

// axis is "fusion" or "angle-loss"; trains every variant with the shared
// seed/data and writes ablate_{axis}.csv under cfg.out_dir. Returns the CSV.
std::string run_ablate(const ExperimentConfig& base, const std::string& axis);

// Property suites (gradients, geometry, fusion, sampling). Prints one line
// per suite with timing; returns false if anything fails. The inject flag
// swaps in a deliberately broken angle-gradient fixture to prove the
// checker catches it.
bool run_verify(std::ostream& log, bool inject_sin2_bug = false);

// exposed for tests
Model load_model(const ExperimentConfig& cfg, const std::string& checkpoint);
Predictor make_predictor(Model& m, bool oracle_boxes);
LossBreakdown scene_loss(Model& m, const Scene& scene,
                         const ExperimentConfig& cfg, Rng& rng,
                         Tensor* total_out);

}  // namespace glass
