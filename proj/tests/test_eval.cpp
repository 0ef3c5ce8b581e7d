#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "glass/eval.hpp"

using namespace glass;

static WordInstance gt_word(RotatedBox box, std::string text) {
  WordInstance w;
  w.box = box;
  w.transcript = std::move(text);
  w.polygon = box_to_polygon(box);
  return w;
}

static Detection det(RotatedBox box, double score, std::string text = "") {
  Detection d;
  d.box = box;
  d.score = score;
  d.transcript = std::move(text);
  return d;
}

// exhaustive best assignment (injective det -> gt) at the IoU threshold
static int brute_force_matches(const std::vector<Detection>& dets,
                               const std::vector<WordInstance>& gts,
                               double thr) {
  int n = (int)dets.size(), m = (int)gts.size();
  int best = 0;
  std::vector<int> assign(n, -1);
  std::function<void(int, int)> rec = [&](int di, int count) {
    if (di == n) {
      best = std::max(best, count);
      return;
    }
    rec(di + 1, count);
    for (int gi = 0; gi < m; ++gi) {
      bool taken = false;
      for (int k = 0; k < di; ++k)
        if (assign[k] == gi) taken = true;
      if (taken) continue;
      if (rotated_iou(dets[di].box, gts[gi].box) >= thr) {
        assign[di] = gi;
        rec(di + 1, count + 1);
        assign[di] = -1;
      }
    }
  };
  rec(0, 0);
  return best;
}

TEST_CASE("basic matching") {
  std::vector<WordInstance> gts = {gt_word({10, 10, 8, 4, 0.2}, "AB")};
  std::vector<Detection> dets = {det({10, 10, 8, 4, 0.2}, 0.9)};
  auto m = match(dets, gts);
  CHECK(m == std::vector<int>{0});

  // two dets on one gt: higher score wins, other is a false positive
  dets = {det({10.2, 10, 8, 4, 0.2}, 0.6), det({10, 10, 8, 4, 0.2}, 0.8)};
  m = match(dets, gts);
  CHECK(m[1] == 0);
  CHECK(m[0] == -1);

  CHECK_THROWS_AS(match({det({0, 0, 1, 1, 0}, NAN)}, gts),
                  std::invalid_argument);
}

TEST_CASE("matching count agrees with the brute-force oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<WordInstance> gts;
    for (int g = 0; g < 3; ++g)
      gts.push_back(gt_word({20.0 + 30 * g, rng.uniform(15, 25),
                             rng.uniform(8, 16), rng.uniform(4, 8),
                             rng.uniform(-1.0, 1.0)},
                            "X"));
    std::vector<Detection> dets;
    for (int d = 0; d < 5; ++d) {
      const RotatedBox& base = gts[rng.uniform_int(0, 2)].box;
      dets.push_back(det({base.cx + rng.normal(0, 2), base.cy + rng.normal(0, 2),
                          base.w * rng.uniform(0.8, 1.2),
                          base.h * rng.uniform(0.8, 1.2),
                          base.theta + rng.normal(0, 0.1)},
                         rng.uniform()));
    }
    auto m = match(dets, gts);
    int greedy = (int)std::count_if(m.begin(), m.end(),
                                    [](int g) { return g >= 0; });
    CHECK(greedy == brute_force_matches(dets, gts, 0.5));
  }
}

TEST_CASE("matching is invariant to det ordering for distinct scores") {
  Rng rng(2);
  std::vector<WordInstance> gts;
  for (int g = 0; g < 4; ++g)
    gts.push_back(gt_word({15.0 + 25 * g, 20, 12, 6, 0.3}, "X"));
  std::vector<Detection> dets;
  for (int d = 0; d < 6; ++d) {
    const RotatedBox& base = gts[d % 4].box;
    dets.push_back(det({base.cx + rng.normal(0, 1), base.cy, base.w, base.h,
                        base.theta},
                       0.1 * d + 0.2));
  }
  auto m1 = match(dets, gts);
  std::vector<int> perm = {5, 2, 0, 4, 1, 3};
  std::vector<Detection> shuffled;
  for (int i : perm) shuffled.push_back(dets[i]);
  auto m2 = match(shuffled, gts);
  for (size_t i = 0; i < perm.size(); ++i) CHECK(m2[i] == m1[perm[i]]);
}

static Scene tiny_scene(std::vector<WordInstance> words, std::string id = "s") {
  Scene sc;
  sc.id = std::move(id);
  sc.image = Tensor::zeros({3, 16, 16});
  sc.words = std::move(words);
  return sc;
}

TEST_CASE("metric separation and count arithmetic") {
  std::vector<WordInstance> gts = {gt_word({10, 10, 8, 4, 0}, "AB"),
                                   gt_word({40, 10, 8, 4, 0}, "C"),
                                   gt_word({70, 10, 8, 4, 0}, "D7")};
  Dataset data = {tiny_scene(gts)};

  // all matched, all transcripts exact
  Predictor perfect = [&](const Scene& s) {
    std::vector<Detection> out;
    for (const auto& w : s.words) out.push_back(det(w.box, 1.0, w.transcript));
    return out;
  };
  EvalReport r = evaluate_dataset(perfect, data);
  CHECK(r.detection.hmean == 1.0);
  CHECK(r.e2e.hmean == 1.0);

  // all matched, no transcript correct
  Predictor wrong_text = [&](const Scene& s) {
    std::vector<Detection> out;
    for (const auto& w : s.words) out.push_back(det(w.box, 1.0, "ZZ"));
    return out;
  };
  r = evaluate_dataset(wrong_text, data);
  CHECK(r.detection.hmean == 1.0);
  CHECK(r.e2e.hmean == 0.0);

  // 2 of 3 matched with correct text, 1 spurious
  Predictor partial = [&](const Scene& s) {
    std::vector<Detection> out;
    out.push_back(det(s.words[0].box, 0.9, s.words[0].transcript));
    out.push_back(det(s.words[1].box, 0.8, s.words[1].transcript));
    out.push_back(det({100, 100, 8, 4, 0}, 0.7, "Q"));
    return out;
  };
  r = evaluate_dataset(partial, data);
  CHECK(r.e2e.recall == doctest::Approx(2.0 / 3));
  CHECK(r.e2e.precision == doctest::Approx(2.0 / 3));
  CHECK(r.e2e.hmean == doctest::Approx(2.0 / 3));
  CHECK(r.matched == 2);
  CHECK(r.spurious == 1);
  CHECK(r.unmatched_gt == 1);
}

TEST_CASE("quartile binning") {
  // sqrt-areas 1,2,3,4: one per bin
  Dataset data = {tiny_scene({gt_word({10, 10, 1, 1, 0}, "A"),
                              gt_word({30, 10, 2, 2, 0}, "B"),
                              gt_word({50, 10, 3, 3, 0}, "C"),
                              gt_word({70, 10, 4, 4, 0}, "D")})};
  auto edges = scale_quartile_edges(data);
  int counts[4] = {0, 0, 0, 0};
  for (int s = 1; s <= 4; ++s) ++counts[scale_bin(s, edges)];
  for (int b = 0; b < 4; ++b) CHECK(counts[b] == 1);

  // all equal areas: everything lands in S by the tie rule
  Dataset flat = {tiny_scene({gt_word({10, 10, 2, 2, 0}, "A"),
                              gt_word({30, 10, 2, 2, 0}, "B"),
                              gt_word({50, 10, 2, 2, 0}, "C"),
                              gt_word({70, 10, 2, 2, 0}, "D")})};
  auto fe = scale_quartile_edges(flat);
  CHECK(scale_bin(2.0, fe) == 0);

  // too few gts
  Dataset small = {tiny_scene({gt_word({10, 10, 2, 2, 0}, "A")})};
  CHECK_THROWS_AS(scale_quartile_edges(small), std::invalid_argument);

  // 1000 random distinct values: 250 +- 1 per bin
  Rng rng(3);
  std::vector<WordInstance> many;
  for (int i = 0; i < 1000; ++i) {
    double s = rng.log_uniform(1.0, 40.0);
    many.push_back(gt_word({50, 50, s, s, 0}, "A"));
  }
  Dataset big = {tiny_scene(std::move(many))};
  auto be = scale_quartile_edges(big);
  int pop[4] = {0, 0, 0, 0};
  for (const auto& w : big[0].words)
    ++pop[scale_bin(std::sqrt(std::fabs(polygon_area(w.polygon))), be)];
  for (int b = 0; b < 4; ++b) CHECK(std::abs(pop[b] - 250) <= 1);
}

TEST_CASE("per-bin true positives sum to the overall count") {
  Rng rng(4);
  Dataset data;
  for (int s = 0; s < 6; ++s) {
    std::vector<WordInstance> words;
    int n = rng.uniform_int(1, 4);
    for (int i = 0; i < n; ++i) {
      double sz = rng.log_uniform(2, 20);
      words.push_back(gt_word(
          {30.0 + 40 * i, rng.uniform(20, 60), sz * 2, sz, rng.uniform(-1, 1)},
          "W"));
    }
    data.push_back(tiny_scene(std::move(words), "s" + std::to_string(s)));
  }
  Rng drng(5);
  Predictor noisy = [&](const Scene& sc) {
    std::vector<Detection> out;
    Rng local(std::hash<std::string>{}(sc.id));
    for (const auto& w : sc.words) {
      if (local.uniform() < 0.25) continue;  // missed
      out.push_back(det({w.box.cx + local.normal(0, 1), w.box.cy, w.box.w,
                         w.box.h, w.box.theta},
                        local.uniform(), local.uniform() < 0.5 ? "W" : "Z"));
    }
    if (local.uniform() < 0.5)
      out.push_back(det({200, 200, 10, 5, 0}, local.uniform(), "Q"));
    return out;
  };
  EvalReport r = evaluate_dataset(noisy, data);
  REQUIRE(r.has_bins);
  int64_t tp = 0, tpe = 0, ngt = 0, ndet = 0;
  for (const auto& b : r.bins) {
    tp += b.tp_det;
    tpe += b.tp_e2e;
    ngt += b.n_gt;
    ndet += b.n_det;
  }
  CHECK(tp == r.matched);
  CHECK(tpe == r.transcript_correct);
  CHECK(ngt == r.matched + r.unmatched_gt);
  CHECK(ndet == r.matched + r.spurious);
  // e2e is a strictly stronger condition
  CHECK(r.e2e.hmean <= r.detection.hmean);
}

TEST_CASE("angle sweep structure") {
  SceneSpec spec;
  spec.width = spec.height = 64;
  spec.min_words = 1;
  spec.max_words = 2;
  spec.min_glyph_height = 8;
  spec.max_glyph_height = 14;
  Dataset data = generate_dataset(spec, 3, 21);
  Predictor oracle = [](const Scene& s) {
    std::vector<Detection> out;
    for (const auto& w : s.words) out.push_back(det(w.box, 1.0, w.transcript));
    return out;
  };
  auto sweep = angle_sweep(oracle, data,
                           {0, M_PI / 6, M_PI / 3, M_PI / 2});
  REQUIRE(sweep.size() == 4);
  for (const auto& [a, r] : sweep) {
    CHECK(r.detection.hmean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.e2e.hmean == doctest::Approx(1.0).epsilon(1e-9));
  }
  // angle 0 equals plain evaluation
  EvalReport plain = evaluate_dataset(oracle, data);
  CHECK(sweep[0].second.detection.hmean == plain.detection.hmean);
  CHECK(sweep[0].second.matched == plain.matched);

  std::string csv = sweep_csv(sweep);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 rows
  CHECK(csv.find("angle_deg") == 0);
  CHECK(csv.find("\n90,") != std::string::npos);
}

TEST_CASE("report serialization") {
  std::vector<WordInstance> gts = {gt_word({10, 10, 4, 2, 0}, "A"),
                                   gt_word({30, 10, 6, 3, 0}, "B"),
                                   gt_word({50, 10, 8, 4, 0}, "C"),
                                   gt_word({70, 10, 10, 5, 0}, "D")};
  Dataset data = {tiny_scene(gts)};
  Predictor perfect = [&](const Scene& s) {
    std::vector<Detection> out;
    for (const auto& w : s.words) out.push_back(det(w.box, 1.0, w.transcript));
    return out;
  };
  EvalReport r = evaluate_dataset(perfect, data);
  std::string j = report_json(r);
  CHECK(j.find("\"hmean\"") != std::string::npos);
  CHECK(j.find("\"bins\"") != std::string::npos);
  CHECK(j.find("\"quartile_edges\"") != std::string::npos);
  std::string c = report_csv(r);
  CHECK(std::count(c.begin(), c.end(), '\n') == 6);  // header + overall + 4 bins
  CHECK(c.find("overall,1,1,1,1,4,4,4") != std::string::npos);
}

TEST_CASE("hmean formula") {
  Metric m = make_metric(2, 4, 8);
  CHECK(m.recall == 0.5);
  CHECK(m.precision == 0.25);
  CHECK(m.hmean == doctest::Approx(2 * 0.5 * 0.25 / 0.75));
  Metric z = make_metric(0, 4, 8);
  CHECK(z.hmean == 0.0);
  Metric e = make_metric(0, 0, 0);
  CHECK(e.hmean == 0.0);
}
