#include "glass/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "glass/checkpoint.hpp"
#include "glass/fusion.hpp"
#include "glass/losses.hpp"
#include "glass/sampling.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace glass {

GenResult run_gen(const ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("gen: out_dir is required");
  Dataset data = generate_dataset(cfg.scene, cfg.n_scenes, cfg.seed);
  write_dataset(data, cfg.out_dir);
  GenResult r;
  r.scenes = (int)data.size();
  for (const auto& s : data) r.words += s.words.size();
  return r;
}

namespace {

Tensor cell_channels(const Tensor& raw, int ch0, int len, int i, int j) {
  Tensor t = slice(raw, 1, i, 1);
  t = slice(t, 2, j, 1);
  t = slice(t, 0, ch0, len);
  return reshape(t, {len});
}

bool inside_box(const RotatedBox& b, double x, double y) {
  auto [c, s] = cos_sin_exact(b.theta);
  double dx = x - b.cx, dy = y - b.cy;
  double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  return std::fabs(lx) <= b.w / 2 && std::fabs(ly) <= b.h / 2;
}

Tensor apply_rbox_loss(const std::string& which, const Tensor& pred,
                       const Tensor& target, const LossWeights& w) {
  return which == "l1" ? rbox_loss_l1(pred, target, w)
                       : rbox_loss_sin2(pred, target, w);
}

Tensor mean_of(const std::vector<Tensor>& terms) {
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor s = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) s = add(s, terms[i]);
  return scale(s, 1.0 / terms.size());
}

}  // namespace

LossBreakdown scene_loss(Model& m, const Scene& scene,
                         const ExperimentConfig& cfg, Rng& rng,
                         Tensor* total_out) {
  const LossWeights& w = cfg.weights;
  auto pyr = m.backbone_forward(scene.image, true);
  auto heads = m.head_forward(pyr, true);
  int a_per = m.cfg.anchors.per_cell();
  int n_gt = (int)scene.words.size();

  struct Ref {
    int level, i, j, a, gt;
  };
  std::vector<Ref> positives;
  std::vector<Ref> best_for_gt(n_gt);
  std::vector<double> best_iou_for_gt(n_gt, 0.0);
  std::set<std::tuple<int, int, int, int>> pos_keys, ignore_keys;

  for (int lv = 0; lv < (int)heads.size(); ++lv) {
    int h = heads[lv].raw.shape()[1], wd = heads[lv].raw.shape()[2];
    auto anchors = m.level_anchors(h, wd, heads[lv].stride);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < wd; ++j)
        for (int a = 0; a < a_per; ++a) {
          const RotatedBox& anc =
              anchors[((size_t)i * wd + j) * a_per + a];
          double best = 0.0;
          int best_g = -1;
          for (int g = 0; g < n_gt; ++g) {
            const RotatedBox& gt = scene.words[g].box;
            double r = 0.5 * (std::hypot(anc.w, anc.h) + std::hypot(gt.w, gt.h));
            if (std::fabs(anc.cx - gt.cx) > r || std::fabs(anc.cy - gt.cy) > r)
              continue;
            double iou = rotated_iou(anc, gt);
            if (iou > best) {
              best = iou;
              best_g = g;
            }
            if (iou > best_iou_for_gt[g]) {
              best_iou_for_gt[g] = iou;
              best_for_gt[g] = {lv, i, j, a, g};
            }
          }
          if (best >= 0.5) {
            positives.push_back({lv, i, j, a, best_g});
            pos_keys.insert({lv, i, j, a});
          } else if (best >= 0.3) {
            ignore_keys.insert({lv, i, j, a});
          }
        }
  }
  // every gt gets at least its single best-overlapping anchor
  for (int g = 0; g < n_gt; ++g) {
    if (best_iou_for_gt[g] <= 0.0) continue;
    const Ref& b = best_for_gt[g];
    if (pos_keys.insert({b.level, b.i, b.j, b.a}).second) positives.push_back(b);
  }

  // objectness: dense BCE over every anchor map. Ignored cells get the
  // current predicted probability as target, which zeroes their gradient.
  // A positive-only term counters the heavy background dilution.
  std::vector<Tensor> dense_obj;
  std::vector<Tensor> pos_logits;
  for (int lv = 0; lv < (int)heads.size(); ++lv) {
    const Tensor& raw = heads[lv].raw;
    int h = raw.shape()[1], wd = raw.shape()[2];
    for (int a = 0; a < a_per; ++a) {
      Tensor lmap = reshape(slice(raw, 0, a * 6, 1), {(int)(h * wd)});
      std::vector<double> targets((size_t)h * wd, 0.0);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < wd; ++j) {
          auto key = std::make_tuple(lv, i, j, a);
          if (pos_keys.count(key)) {
            targets[(size_t)i * wd + j] = 1.0;
          } else if (ignore_keys.count(key)) {
            double l = raw.at({a * 6, i, j});
            targets[(size_t)i * wd + j] = 1.0 / (1.0 + std::exp(-l));
          }
        }
      // sum over cells, normalized by the positive count further below, the
      // usual dense-detector normalization
      dense_obj.push_back(scale(bce_with_logits_mean(lmap, targets), h * wd));
    }
  }
  for (const Ref& p : positives)
    pos_logits.push_back(
        cell_channels(heads[p.level].raw, p.a * 6, 1, p.i, p.j));
  Tensor obj_sum = dense_obj[0];
  for (size_t k = 1; k < dense_obj.size(); ++k)
    obj_sum = add(obj_sum, dense_obj[k]);
  Tensor obj_t =
      scale(obj_sum, 1.0 / std::max<size_t>(8, 4 * positives.size()));
  if (!pos_logits.empty()) {
    Tensor pos_t = bce_with_logits_mean(
        concat(pos_logits, 0), std::vector<double>(pos_logits.size(), 1.0));
    obj_t = add(obj_t, pos_t);
  }

  std::vector<Tensor> dense_terms;
  for (const Ref& p : positives) {
    int h = heads[p.level].raw.shape()[1], wd = heads[p.level].raw.shape()[2];
    auto anchors = m.level_anchors(h, wd, heads[p.level].stride);
    const RotatedBox& anc = anchors[((size_t)p.i * wd + p.j) * a_per + p.a];
    Tensor pred = cell_channels(heads[p.level].raw, p.a * 6 + 1, 5, p.i, p.j);
    Tensor target =
        Tensor::from_data({5}, encode_box(scene.words[p.gt].box, anc));
    dense_terms.push_back(apply_rbox_loss(cfg.angle_loss, pred, target, w));
  }

  // word-level supervision on jittered gt proposals
  std::vector<int> picks;
  if (n_gt <= cfg.words_per_step) {
    for (int g = 0; g < n_gt; ++g) picks.push_back(g);
  } else {
    std::set<int> seen;
    while ((int)seen.size() < cfg.words_per_step)
      seen.insert(rng.uniform_int(0, n_gt - 1));
    picks.assign(seen.begin(), seen.end());
  }

  std::vector<RotatedBox> props;
  std::vector<Tensor> zg, zl;
  for (int g : picks) {
    const RotatedBox& gt = scene.words[g].box;
    RotatedBox prop;
    // jitter magnitudes match the first-stage localization error, so the
    // refinement head sees the offsets it must correct at inference
    prop.cx = gt.cx + rng.normal(0, 0.15 * gt.w);
    prop.cy = gt.cy + rng.normal(0, 0.15 * gt.h);
    prop.w = gt.w * std::exp(rng.normal(0, 0.15));
    prop.h = gt.h * std::exp(rng.normal(0, 0.15));
    prop.theta = canonicalize_angle(gt.theta + rng.normal(0, 0.12));
    props.push_back(prop);
    zg.push_back(m.global_roi(pyr, prop));
    zl.push_back(m.local_extractor(
        crop_align_image(scene.image, prop, m.cfg.crop_h, m.cfg.crop_w), true));
  }
  std::vector<Tensor> refine_terms, rec_terms, mask_terms;
  if (!picks.empty()) {
    auto fused = m.fuse(zg, zl, true);
    for (size_t k = 0; k < picks.size(); ++k) {
      const WordInstance& word = scene.words[picks[k]];
      Tensor rt = Tensor::from_data(
          {5}, encode_refinement(word.box, props[k]));
      refine_terms.push_back(
          apply_rbox_loss(cfg.angle_loss, m.refine_logits(fused[k]), rt, w));

      std::vector<int> syms = m.string_to_symbols(word.transcript);
      Tensor logits = m.recognize_teacher(fused[k], syms, true);
      syms.push_back(m.cfg.eos_symbol());
      rec_terms.push_back(recognition_nll(logits, syms));

      Affine2x3 aff = crop_affine(m.expanded_roi(props[k]), m.cfg.fusion.height,
                                  m.cfg.fusion.width);
      std::vector<double> gt_mask;
      for (int i = 0; i < m.cfg.fusion.height; ++i)
        for (int j = 0; j < m.cfg.fusion.width; ++j) {
          Point p = aff.apply(j + 0.5, i + 0.5);
          gt_mask.push_back(inside_box(word.box, p.x, p.y) ? 1.0 : 0.0);
        }
      mask_terms.push_back(mask_loss(m.mask_logits(zg[k], true), gt_mask));
    }
  }

  Tensor rbox_t = add(mean_of(dense_terms), mean_of(refine_terms));
  Tensor rec_t = mean_of(rec_terms);
  Tensor mask_t = mean_of(mask_terms);
  Tensor total_t = total_loss_tensor(rbox_t, mask_t, rec_t, obj_t, w);

  LossBreakdown lb;
  lb.rbox = rbox_t.item();
  lb.rec = rec_t.item();
  lb.mask = mask_t.item();
  lb.objectness = obj_t.item();
  lb.total = total_t.item();
  if (total_out) *total_out = total_t;
  return lb;
}

namespace {

void snap_f32(ParamStore& store) {
  for (const auto& [name, t] : store.entries())
    for (double& v : const_cast<Tensor&>(t).data()) v = (double)(float)v;
}

std::string ck_prefix(const std::string& out, int step) {
  return (fs::path(out) / ("ck_" + std::to_string(step))).string();
}
std::string state_prefix(const std::string& out, int step) {
  return (fs::path(out) / ("state_" + std::to_string(step))).string();
}

}  // namespace

TrainResult run_train(const ExperimentConfig& cfg, int resume_step) {
  cfg.validate();
  if (cfg.dataset_dir.empty()) throw ConfigError("train: dataset is required");
  if (cfg.out_dir.empty()) throw ConfigError("train: out_dir is required");
  Dataset data = read_dataset(cfg.dataset_dir);
  if (data.empty()) throw ConfigError("train: dataset is empty");
  fs::create_directories(cfg.out_dir);

  Model m = Model::make(cfg.model, cfg.seed);
  ParamStore state;
  std::vector<Tensor> vel;
  for (const auto& [name, t] : m.params.entries())
    if (t.requires_grad()) {
      Tensor v = Tensor::zeros(t.shape());
      vel.push_back(v);
      state.add("velocity." + name, v);
    }
  Tensor step_t = Tensor::zeros({1});
  state.add("step", step_t);

  if (resume_step > 0) {
    load_checkpoint(m.params, ck_prefix(cfg.out_dir, resume_step));
    load_checkpoint(state, state_prefix(cfg.out_dir, resume_step));
    if ((int)std::llround(step_t.data()[0]) != resume_step)
      throw ConfigError("train: state checkpoint step mismatch");
  }

  std::ofstream log(fs::path(cfg.out_dir) / "train_log.jsonl",
                    resume_step > 0 ? std::ios::app : std::ios::trunc);

  TrainResult res;
  res.steps = cfg.optim.steps;
  int start = resume_step;
  for (int s = start; s < cfg.optim.steps; ++s) {
    Rng rng = Rng(cfg.seed).derive(0x5eed0000ull + (uint64_t)s);
    double lr = cfg.optim.lr;
    if (cfg.optim.decay_every > 0)
      lr *= std::pow(cfg.optim.decay_factor, s / cfg.optim.decay_every);

    m.params.zero_grads();
    LossBreakdown avg;
    for (int b = 0; b < cfg.optim.batch; ++b) {
      const Scene& scene = data[rng.uniform_int(0, (int)data.size() - 1)];
      Tensor total;
      LossBreakdown lb = scene_loss(m, scene, cfg, rng, &total);
      if (!std::isfinite(lb.total))
        throw NumericError(s, "non-finite loss at step " + std::to_string(s) +
                                  " on scene " + scene.id);
      backward(scale(total, 1.0 / cfg.optim.batch));
      avg.total += lb.total / cfg.optim.batch;
      avg.rbox += lb.rbox / cfg.optim.batch;
      avg.rec += lb.rec / cfg.optim.batch;
      avg.mask += lb.mask / cfg.optim.batch;
      avg.objectness += lb.objectness / cfg.optim.batch;
    }

    size_t vi = 0;
    for (const auto& [name, t] : m.params.entries()) {
      if (!t.requires_grad()) continue;
      Tensor& p = const_cast<Tensor&>(t);
      auto& v = vel[vi].data();
      const auto& g = p.grad();
      auto& pd = p.data();
      for (size_t i = 0; i < pd.size(); ++i) {
        v[i] = cfg.optim.momentum * v[i] - lr * g[i];
        pd[i] += v[i];
      }
      ++vi;
    }

    int step = s + 1;
    log << json{{"step", step},
                {"total", avg.total},
                {"rbox", avg.rbox},
                {"rec", avg.rec},
                {"mask", avg.mask},
                {"objectness", avg.objectness},
                {"lr", lr}}
               .dump()
        << "\n";
    if (s == start) res.initial_loss = avg.total;
    res.final_loss = avg.total;

    if (step % cfg.optim.checkpoint_every == 0 || step == cfg.optim.steps) {
      step_t.data()[0] = step;
      save_checkpoint(m.params, ck_prefix(cfg.out_dir, step));
      save_checkpoint(state, state_prefix(cfg.out_dir, step));
      // mirror the f32 quantization a resumed run would see, so resumed and
      // fresh runs stay bit-identical from here on
      snap_f32(m.params);
      snap_f32(state);
    }
  }
  if (start >= cfg.optim.steps) {
    step_t.data()[0] = cfg.optim.steps;
    save_checkpoint(m.params, ck_prefix(cfg.out_dir, cfg.optim.steps));
    save_checkpoint(state, state_prefix(cfg.out_dir, cfg.optim.steps));
  }
  save_checkpoint(m.params,
                  (fs::path(cfg.out_dir) / "ck_final").string());
  res.checkpoint = (fs::path(cfg.out_dir) / "ck_final").string();
  return res;
}

Model load_model(const ExperimentConfig& cfg, const std::string& checkpoint) {
  Model m = Model::make(cfg.model, cfg.seed);
  if (!checkpoint.empty()) load_checkpoint(m.params, checkpoint);
  return m;
}

Predictor make_predictor(Model& m, bool oracle_boxes) {
  return [&m, oracle_boxes](const Scene& scene) {
    if (oracle_boxes) {
      std::vector<RotatedBox> boxes;
      for (const auto& w : scene.words) boxes.push_back(w.box);
      return m.spot(scene.image, &boxes);
    }
    return m.spot(scene.image);
  };
}

EvalReport run_eval(const ExperimentConfig& cfg, const std::string& checkpoint,
                    const std::string& dataset_dir, const EvalOptions& opt,
                    const std::string& out_dir) {
  Model m = load_model(cfg, checkpoint);
  Dataset data = read_dataset(dataset_dir);
  Predictor pred = make_predictor(m, opt.oracle_boxes);
  EvalReport r = evaluate_dataset(pred, data, opt.iou);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "report.json") << report_json(r);
    std::ofstream(fs::path(out_dir) / "report.csv") << report_csv(r);
    if (!opt.sweep_deg.empty()) {
      std::vector<double> rad;
      for (double d : opt.sweep_deg) rad.push_back(d * M_PI / 180.0);
      auto sweep = angle_sweep(pred, data, rad, opt.iou);
      std::ofstream(fs::path(out_dir) / "sweep.csv") << sweep_csv(sweep);
    }
  }
  return r;
}

std::string run_ablate(const ExperimentConfig& base, const std::string& axis) {
  std::vector<std::string> variants;
  if (axis == "fusion")
    variants = {"global", "local", "concat", "glass"};
  else if (axis == "angle-loss")
    variants = {"l1", "sin2"};
  else
    throw ConfigError("ablate: axis must be 'fusion' or 'angle-loss'");
  if (base.out_dir.empty()) throw ConfigError("ablate: out_dir is required");

  std::ostringstream csv;
  csv << "variant,recall,precision,hmean_det,hmean_e2e,S_e2e,M_e2e,L_e2e,XL_"
         "e2e\n";
  std::string eval_ds = base.eval_dir.empty() ? base.dataset_dir : base.eval_dir;
  for (const std::string& v : variants) {
    ExperimentConfig cfg = base;
    if (axis == "fusion")
      cfg.model.variant = fusion_variant_from_string(v);
    else
      cfg.angle_loss = v;
    cfg.out_dir = (fs::path(base.out_dir) / (axis + "_" + v)).string();
    TrainResult tr = run_train(cfg);
    EvalReport r = run_eval(cfg, tr.checkpoint, eval_ds, {}, cfg.out_dir);
    csv << v << "," << r.detection.recall << "," << r.detection.precision
        << "," << r.detection.hmean << "," << r.e2e.hmean;
    for (int b = 0; b < 4; ++b)
      csv << "," << (r.has_bins ? r.bins[b].e2e.hmean : 0.0);
    csv << "\n";
  }
  fs::create_directories(base.out_dir);
  std::ofstream(fs::path(base.out_dir) / ("ablate_" + axis + ".csv"))
      << csv.str();
  return csv.str();
}

// ---- verify suites ------------------------------------------------------

namespace {

// same forward value as the sin2 loss, deliberately negated gradient
Tensor broken_sin2(const Tensor& pred, const Tensor& target,
                   const LossWeights& w) {
  Tensor good = rbox_loss_sin2(pred, target, w);
  return add_scalar(scale(good, -1.0), 2.0 * good.item());
}

double raster_iou(const RotatedBox& a, const RotatedBox& b, int res) {
  double x0 = std::min(a.cx, b.cx) - std::max(a.w + a.h, b.w + b.h);
  double x1 = std::max(a.cx, b.cx) + std::max(a.w + a.h, b.w + b.h);
  double y0 = std::min(a.cy, b.cy) - std::max(a.w + a.h, b.w + b.h);
  double y1 = std::max(a.cy, b.cy) + std::max(a.w + a.h, b.w + b.h);
  int64_t ia = 0, ib = 0, ii = 0;
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      double x = x0 + (j + 0.5) * (x1 - x0) / res;
      double y = y0 + (i + 0.5) * (y1 - y0) / res;
      bool in_a = inside_box(a, x, y), in_b = inside_box(b, x, y);
      ia += in_a;
      ib += in_b;
      ii += in_a && in_b;
    }
  int64_t uu = ia + ib - ii;
  return uu > 0 ? (double)ii / uu : 0.0;
}

struct Suite {
  std::string name;
  bool ok = true;
  std::vector<std::string> failures;
  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failures.push_back(what);
    }
  }
};

void suite_gradients(Suite& s, bool inject) {
  Rng rng(1001);
  auto pt = [&](const Shape& sh) { return Tensor::randn(sh, rng, 1.0, false); };
  for (int trial = 0; trial < 5; ++trial) {
    s.check(finite_diff_gradcheck(
                [](const Tensor& x) { return sum_all(mul(sigmoid(x), tanh_op(x))); },
                pt({3, 4})) < 1e-4,
            "sigmoid*tanh gradient");
    s.check(finite_diff_gradcheck(
                [](const Tensor& x) {
                  Tensor sm = softmax(x, {1});
                  return sum_all(mul(sm, sm));
                },
                pt({3, 5})) < 1e-4,
            "softmax gradient");
    Tensor w = pt({2, 3, 3, 3});
    s.check(finite_diff_gradcheck(
                [&](const Tensor& x) {
                  Tensor y = conv2d(x, w, Tensor(), {1, 1, 1, 1});
                  return sum_all(mul(y, y));
                },
                pt({3, 5, 5})) < 1e-4,
            "conv2d gradient");
    s.check(finite_diff_gradcheck(
                [](const Tensor& x) {
                  return bce_with_logits_mean(x, {1, 0, 1, 0, 1, 0});
                },
                pt({6})) < 1e-4,
            "bce gradient");
  }
  LossWeights w;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor t = pt({5});
    Tensor p = pt({5});
    for (int j = 0; j < 4; ++j) {
      double d = p.data()[j] - t.data()[j];
      if (std::fabs(d) < 0.05)
        p.data()[j] = t.data()[j] + (d >= 0 ? 0.05 : -0.05);
    }
    double shifted = std::fmod(p.data()[4] - t.data()[4], M_PI);
    if (std::fabs(shifted) < 0.05 || std::fabs(std::fabs(shifted) - M_PI) < 0.05)
      p.data()[4] += 0.1;
    if (inject) {
      s.check(finite_diff_gradcheck(
                  [&](const Tensor& x) { return broken_sin2(x, t, w); }, p) <
                  1e-4,
              "rbox_loss_sin2 gradient");
    } else {
      s.check(finite_diff_gradcheck(
                  [&](const Tensor& x) { return rbox_loss_sin2(x, t, w); }, p) <
                  1e-4,
              "rbox_loss_sin2 gradient");
    }
    s.check(finite_diff_gradcheck(
                [&](const Tensor& x) { return rbox_loss_l1(x, t, w); }, p) <
                1e-4,
            "rbox_loss_l1 gradient");
  }
}

void suite_geometry(Suite& s) {
  Rng rng(1002);
  for (int trial = 0; trial < 200; ++trial) {
    RotatedBox a{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(1, 6),
                 rng.uniform(1, 6), rng.uniform(-M_PI, M_PI)};
    RotatedBox b{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(1, 6),
                 rng.uniform(1, 6), rng.uniform(-M_PI, M_PI)};
    double clip = rotated_iou(a, b);
    double ras = raster_iou(a, b, 256);
    s.check(std::fabs(clip - ras) < 1e-2, "clipping vs raster IoU");
  }
  double want = 2 * (std::sqrt(2.0) - 1) / (2 - 2 * (std::sqrt(2.0) - 1));
  double got = rotated_iou({0, 0, 2, 2, 0}, {0, 0, 2, 2, M_PI / 4});
  s.check(std::fabs(got - want) < 1e-6, "45-degree square IoU");
}

void suite_fusion(Suite& s) {
  Rng rng(1003);
  for (int trial = 0; trial < 20; ++trial) {
    FusionConfig cfg{16, 4, 6, (trial % 2) ? 4 : 16};
    FusionParams p = FusionParams::make(cfg, rng);
    Tensor zg = Tensor::randn({16, 4, 6}, rng, 1.0);
    Tensor zl = Tensor::randn({16, 4, 6}, rng, 1.0);
    Tensor fused = glass_fuse(zg, zl, p, cfg);
    Tensor plain = interleave_concat(zg, zl, cfg);
    s.check(fused.data() == plain.data(), "zero-transform fusion identity");
    auto [back_g, back_l] = channel_deinterleave(plain);
    s.check(back_g.data() == zg.data() && back_l.data() == zl.data(),
            "deinterleave inverse");
  }
  for (int trial = 0; trial < 50; ++trial) {
    int k = (trial % 3 == 0) ? 1 : (trial % 3 == 1) ? 4 : 8;
    FusionConfig cfg{8, 3, 5, k};
    FusionParams p = FusionParams::make(cfg, rng);
    Tensor zg = Tensor::randn({8, 3, 5}, rng, 1.0);
    Tensor zl = Tensor::randn({8, 3, 5}, rng, 1.0);
    Tensor zcat = interleave_concat(zg, zl, cfg);
    int bm = 2 * cfg.block_channels();
    for (int b = 0; b < cfg.blocks; ++b) {
      Tensor zb = slice(zcat, 0, b * bm, bm);
      Tensor flat = reshape(zb, {bm, 15});
      Tensor scores = matmul(reshape(p.v[b], {1, bm}), flat);
      Tensor alpha = softmax(scores, {1});
      double sum = 0;
      for (double v : alpha.data()) sum += v;
      s.check(std::fabs(sum - 1.0) < 1e-9, "attention normalization");
    }
  }
}

void suite_sampling(Suite& s) {
  Rng rng(1004);
  Tensor f = Tensor::randn({2, 12, 12}, rng, 1.0);
  FeaturePyramid p;
  p.levels.push_back({1, f});
  for (int trial = 0; trial < 30; ++trial) {
    double w = rng.uniform(1, 8), h = rng.uniform(1, 8);
    double cx = rng.uniform(2, 10), cy = rng.uniform(2, 10);
    Tensor out = rotated_roi_align(p, {cx, cy, w, h, 0}, 3, 4);
    // independent axis-aligned bilinear oracle
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) {
        double sx = cx - w / 2 + (j + 0.5) * w / 4 - 0.5;
        double sy = cy - h / 2 + (i + 0.5) * h / 3 - 0.5;
        int xa = (int)std::floor(sx), ya = (int)std::floor(sy);
        double fx = sx - xa, fy = sy - ya;
        for (int c = 0; c < 2; ++c) {
          double acc = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              int xx = xa + dx, yy = ya + dy;
              if (xx < 0 || xx >= 12 || yy < 0 || yy >= 12) continue;
              acc += (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * f.at({c, yy, xx});
            }
          s.check(std::fabs(out.at({c, i, j}) - acc) < 1e-10,
                  "axis-aligned roi align equivalence");
        }
      }
  }
  // quarter-turn equivariance, exact
  int n = 6;
  Tensor g = Tensor::randn({1, n, n}, rng, 1.0);
  Tensor gr = Tensor::zeros({1, n, n});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      gr.data()[y * n + x] = g.at({0, n - 1 - x, y});
  FeaturePyramid pg, pgr;
  pg.levels.push_back({1, g});
  pgr.levels.push_back({1, gr});
  Tensor a = rotated_roi_align(pg, {2.5, 3.5, 3, 2, M_PI / 2}, 2, 3);
  Tensor b = rotated_roi_align(pgr, {n - 3.5, 2.5, 3, 2, 0}, 2, 3);
  s.check(a.data() == b.data(), "quarter-turn equivariance");
}

}  // namespace

bool run_verify(std::ostream& log, bool inject_sin2_bug) {
  using clock = std::chrono::steady_clock;
  bool all_ok = true;
  auto run = [&](const std::string& name, auto&& fn) {
    Suite s;
    s.name = name;
    auto t0 = clock::now();
    fn(s);
    double ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    if (s.ok) {
      log << "PASS " << name << " (" << (int)ms << " ms)\n";
    } else {
      all_ok = false;
      log << "FAIL " << name << " (" << (int)ms << " ms)\n";
      std::set<std::string> uniq(s.failures.begin(), s.failures.end());
      for (const auto& f : uniq) log << "  failed: " << f << "\n";
    }
  };
  run("gradients", [&](Suite& s) { suite_gradients(s, inject_sin2_bug); });
  run("geometry", [](Suite& s) { suite_geometry(s); });
  run("fusion", [](Suite& s) { suite_fusion(s); });
  run("sampling", [](Suite& s) { suite_sampling(s); });
  return all_ok;
}

}  // namespace glass
