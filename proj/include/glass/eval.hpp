#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "glass/model.hpp"
#include "glass/synthdata.hpp"

namespace glass {

struct Metric {
  double recall = 0, precision = 0, hmean = 0;
};

Metric make_metric(int64_t tp, int64_t n_gt, int64_t n_det);

struct BinReport {
  Metric det, e2e;
  int64_t n_gt = 0, n_det = 0, tp_det = 0, tp_e2e = 0;
};

struct EvalReport {
  Metric detection, e2e;
  int64_t matched = 0, unmatched_gt = 0, spurious = 0, transcript_correct = 0;
  std::array<double, 3> quartile_edges{0, 0, 0};
  bool has_bins = false;
  std::array<BinReport, 4> bins;  // S, M, L, XL
};

extern const char* const kScaleBinLabels[4];

// Greedy one-to-one matching in descending score order; det_to_gt[i] is the
// matched gt index or -1.
std::vector<int> match(const std::vector<Detection>& dets,
                       const std::vector<WordInstance>& gts,
                       double iou_threshold = 0.5);

// Quartiles of sqrt polygon area over all gt words; needs >= 4 instances.
std::array<double, 3> scale_quartile_edges(const Dataset& data);
// Bin index: number of edges strictly below the value, so ties stay left.
int scale_bin(double sqrt_area, const std::array<double, 3>& edges);

using Predictor = std::function<std::vector<Detection>(const Scene&)>;

// Full-dataset evaluation; bins are filled when the gt population (or the
// explicit edges) allow it. Parallel over scenes, deterministic reduction.
EvalReport evaluate_dataset(const Predictor& predict, const Dataset& data,
                            double iou_threshold = 0.5,
                            const std::array<double, 3>* edges = nullptr);

std::vector<std::pair<double, EvalReport>> angle_sweep(
    const Predictor& predict, const Dataset& data,
    const std::vector<double>& angles_rad, double iou_threshold = 0.5);

std::string report_json(const EvalReport& r);
// rows: overall + one per populated bin: label,R,P,H_det,H_e2e,counts
std::string report_csv(const EvalReport& r);
std::string sweep_csv(const std::vector<std::pair<double, EvalReport>>& sweep);

// GLASS_NUM_WORKERS env override; defaults to hardware concurrency.
int num_workers();

}  // namespace glass
