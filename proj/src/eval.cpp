#include "glass/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

using nlohmann::json;

namespace glass {

const char* const kScaleBinLabels[4] = {"S", "M", "L", "XL"};

int num_workers() {
  if (const char* env = std::getenv("GLASS_NUM_WORKERS")) {
    int n = std::atoi(env);
    if (n >= 1) return std::min(n, 64);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return std::clamp<int>(hc ? (int)hc : 1, 1, 16);
}

Metric make_metric(int64_t tp, int64_t n_gt, int64_t n_det) {
  Metric m;
  m.recall = n_gt > 0 ? (double)tp / n_gt : 0.0;
  m.precision = n_det > 0 ? (double)tp / n_det : 0.0;
  m.hmean = m.precision + m.recall > 0
                ? 2 * m.precision * m.recall / (m.precision + m.recall)
                : 0.0;
  return m;
}

std::vector<int> match(const std::vector<Detection>& dets,
                       const std::vector<WordInstance>& gts,
                       double iou_threshold) {
  for (const auto& d : dets)
    if (!std::isfinite(d.score))
      throw std::invalid_argument("match: non-finite detection score");
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dets[a].score > dets[b].score; });
  std::vector<int> det_to_gt(dets.size(), -1);
  std::vector<bool> used(gts.size(), false);
  for (int di : order) {
    int best = -1;
    double best_iou = iou_threshold;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (used[gi]) continue;
      double iou = rotated_iou(dets[di].box, gts[gi].box);
      if (iou >= best_iou) {
        best_iou = iou;
        best = (int)gi;
      }
    }
    if (best >= 0) {
      det_to_gt[di] = best;
      used[best] = true;
    }
  }
  return det_to_gt;
}

std::array<double, 3> scale_quartile_edges(const Dataset& data) {
  std::vector<double> vals;
  for (const auto& scene : data)
    for (const auto& w : scene.words)
      vals.push_back(std::sqrt(std::fabs(polygon_area(w.polygon))));
  if (vals.size() < 4)
    throw std::invalid_argument(
        "scale_quartile_edges: need at least 4 gt instances");
  std::sort(vals.begin(), vals.end());
  auto pct = [&](double p) {
    double pos = p * (vals.size() - 1);
    size_t lo = (size_t)std::floor(pos);
    size_t hi = std::min(lo + 1, vals.size() - 1);
    double f = pos - lo;
    return vals[lo] * (1 - f) + vals[hi] * f;
  };
  return {pct(0.25), pct(0.5), pct(0.75)};
}

int scale_bin(double sqrt_area, const std::array<double, 3>& edges) {
  int b = 0;
  for (double e : edges)
    if (e < sqrt_area) ++b;
  return b;
}

EvalReport evaluate_dataset(const Predictor& predict, const Dataset& data,
                            double iou_threshold,
                            const std::array<double, 3>* edges) {
  std::vector<std::vector<Detection>> preds(data.size());
  int workers = std::min<int>(num_workers(), std::max<size_t>(data.size(), 1));
  if (workers > 1 && data.size() > 1) {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (size_t i; (i = next.fetch_add(1)) < data.size();)
          preds[i] = predict(data[i]);
      });
    for (auto& th : pool) th.join();
  } else {
    for (size_t i = 0; i < data.size(); ++i) preds[i] = predict(data[i]);
  }

  EvalReport r;
  if (edges) {
    r.quartile_edges = *edges;
    r.has_bins = true;
  } else {
    int64_t n_gt_total = 0;
    for (const auto& s : data) n_gt_total += s.words.size();
    if (n_gt_total >= 4) {
      r.quartile_edges = scale_quartile_edges(data);
      r.has_bins = true;
    }
  }

  int64_t n_gt = 0, n_det = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    const auto& gts = data[i].words;
    const auto& dets = preds[i];
    n_gt += gts.size();
    n_det += dets.size();
    auto det_to_gt = match(dets, gts, iou_threshold);
    std::vector<bool> gt_matched(gts.size(), false);
    for (size_t di = 0; di < dets.size(); ++di) {
      int gi = det_to_gt[di];
      if (gi < 0) {
        ++r.spurious;
        if (r.has_bins) {
          int b = scale_bin(std::sqrt(dets[di].box.w * dets[di].box.h),
                            r.quartile_edges);
          ++r.bins[b].n_det;
        }
        continue;
      }
      gt_matched[gi] = true;
      ++r.matched;
      bool text_ok = dets[di].transcript == gts[gi].transcript;
      if (text_ok) ++r.transcript_correct;
      if (r.has_bins) {
        int b = scale_bin(std::sqrt(std::fabs(polygon_area(gts[gi].polygon))),
                          r.quartile_edges);
        ++r.bins[b].n_det;
        ++r.bins[b].tp_det;
        if (text_ok) ++r.bins[b].tp_e2e;
      }
    }
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (!gt_matched[gi]) ++r.unmatched_gt;
      if (r.has_bins) {
        int b = scale_bin(std::sqrt(std::fabs(polygon_area(gts[gi].polygon))),
                          r.quartile_edges);
        ++r.bins[b].n_gt;
      }
    }
  }
  r.detection = make_metric(r.matched, n_gt, n_det);
  r.e2e = make_metric(r.transcript_correct, n_gt, n_det);
  if (r.has_bins)
    for (auto& b : r.bins) {
      b.det = make_metric(b.tp_det, b.n_gt, b.n_det);
      b.e2e = make_metric(b.tp_e2e, b.n_gt, b.n_det);
    }
  return r;
}

std::vector<std::pair<double, EvalReport>> angle_sweep(
    const Predictor& predict, const Dataset& data,
    const std::vector<double>& angles_rad, double iou_threshold) {
  std::vector<std::pair<double, EvalReport>> out;
  for (double a : angles_rad) {
    if (!std::isfinite(a))
      throw std::invalid_argument("angle_sweep: non-finite angle");
    Dataset rotated = rotate_dataset(data, a);
    out.emplace_back(a, evaluate_dataset(predict, rotated, iou_threshold));
  }
  return out;
}

namespace {

json metric_json(const Metric& m) {
  return {{"recall", m.recall}, {"precision", m.precision}, {"hmean", m.hmean}};
}

}  // namespace

std::string report_json(const EvalReport& r) {
  json j = {{"detection", metric_json(r.detection)},
            {"e2e", metric_json(r.e2e)},
            {"counts",
             {{"matched", r.matched},
              {"unmatched_gt", r.unmatched_gt},
              {"spurious", r.spurious},
              {"transcript_correct", r.transcript_correct}}}};
  if (r.has_bins) {
    j["quartile_edges"] = r.quartile_edges;
    json bins = json::object();
    for (int b = 0; b < 4; ++b)
      bins[kScaleBinLabels[b]] = {{"detection", metric_json(r.bins[b].det)},
                                  {"e2e", metric_json(r.bins[b].e2e)},
                                  {"n_gt", r.bins[b].n_gt},
                                  {"n_det", r.bins[b].n_det}};
    j["bins"] = bins;
  }
  return j.dump(2);
}

namespace {

void csv_metric_row(std::ostringstream& os, const std::string& label,
                    const Metric& det, const Metric& e2e, int64_t n_gt,
                    int64_t n_det, int64_t tp) {
  os << label << "," << det.recall << "," << det.precision << "," << det.hmean
     << "," << e2e.hmean << "," << n_gt << "," << n_det << "," << tp << "\n";
}

}  // namespace

std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "label,recall,precision,hmean_det,hmean_e2e,n_gt,n_det,tp\n";
  int64_t n_gt = r.matched + r.unmatched_gt;
  int64_t n_det = r.matched + r.spurious;
  csv_metric_row(os, "overall", r.detection, r.e2e, n_gt, n_det, r.matched);
  if (r.has_bins)
    for (int b = 0; b < 4; ++b)
      csv_metric_row(os, kScaleBinLabels[b], r.bins[b].det, r.bins[b].e2e,
                     r.bins[b].n_gt, r.bins[b].n_det, r.bins[b].tp_det);
  return os.str();
}

std::string sweep_csv(const std::vector<std::pair<double, EvalReport>>& sweep) {
  std::ostringstream os;
  os << "angle_deg,recall,precision,hmean_det,hmean_e2e,n_gt,n_det,tp\n";
  for (const auto& [angle, r] : sweep) {
    std::ostringstream lbl;
    lbl << angle * 180.0 / M_PI;
    csv_metric_row(os, lbl.str(), r.detection, r.e2e,
                   r.matched + r.unmatched_gt, r.matched + r.spurious,
                   r.matched);
  }
  return os.str();
}

}  // namespace glass
