#include "glass/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace glass {

const char kGlyphChars[17] = "0123456789ABCDEF";

FusionVariant fusion_variant_from_string(const std::string& s) {
  if (s == "global") return FusionVariant::kGlobal;
  if (s == "local") return FusionVariant::kLocal;
  if (s == "concat") return FusionVariant::kConcat;
  if (s == "glass") return FusionVariant::kGlass;
  throw std::invalid_argument("unknown fusion variant: " + s);
}

std::string to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::kGlobal: return "global";
    case FusionVariant::kLocal: return "local";
    case FusionVariant::kConcat: return "concat";
    case FusionVariant::kGlass: return "glass";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (vocab < 2) throw std::invalid_argument("model: vocab must be >= 2");
  if (max_len < 1) throw std::invalid_argument("model: max_len must be >= 1");
  if (backbone_widths.size() != 3)
    throw std::invalid_argument("model: expected 3 backbone widths");
  fusion.validate();
  if (fusion.channels != channels)
    throw std::invalid_argument("model: fusion channel count must match C");
  if (crop_h / 4 != fusion.height || crop_w / 4 != fusion.width)
    throw std::invalid_argument(
        "model: local crop must downscale 4x onto the fusion grid");
}

// ---- anchor transform ---------------------------------------------------

std::vector<double> encode_box(const RotatedBox& gt, const RotatedBox& anchor) {
  return {(gt.cx - anchor.cx) / anchor.w, (gt.cy - anchor.cy) / anchor.h,
          std::log(gt.w / anchor.w), std::log(gt.h / anchor.h),
          canonicalize_angle(gt.theta)};
}

RotatedBox decode_box(const std::vector<double>& d, const RotatedBox& anchor) {
  RotatedBox b;
  b.cx = anchor.cx + d[0] * anchor.w;
  b.cy = anchor.cy + d[1] * anchor.h;
  b.w = anchor.w * std::exp(std::clamp(d[2], -6.0, 6.0));
  b.h = anchor.h * std::exp(std::clamp(d[3], -6.0, 6.0));
  b.theta = canonicalize_angle(d[4]);
  return b;
}

std::vector<double> encode_refinement(const RotatedBox& gt,
                                      const RotatedBox& proposal) {
  return {(gt.cx - proposal.cx) / proposal.w,
          (gt.cy - proposal.cy) / proposal.h, std::log(gt.w / proposal.w),
          std::log(gt.h / proposal.h),
          canonicalize_angle(gt.theta - proposal.theta)};
}

// ---- layers -------------------------------------------------------------

ConvBnRelu ConvBnRelu::make(int cin, int cout, int kh, int kw, Conv2dOpts opts,
                            Rng& rng, bool use_bn, bool use_relu) {
  ConvBnRelu l;
  double std = std::sqrt(2.0 / (cin * kh * kw));
  l.weight = Tensor::randn({cout, cin, kh, kw}, rng, std, true);
  l.bias = Tensor::zeros({cout}, true);
  if (use_bn) l.bn = BatchNormParams::make(cout);
  l.opts = opts;
  l.use_bn = use_bn;
  l.use_relu = use_relu;
  return l;
}

Tensor ConvBnRelu::forward(const Tensor& x, bool) {
  Tensor y = conv2d(x, weight, bias, opts);
  if (use_bn) {
    // per-sample spatial statistics in every mode: the train and eval paths
    // are identical, so single-sample batches never see stale running stats.
    // 1x1 maps have no spatial statistics and fall back to the stored affine.
    bool spatial = y.numel() / y.shape()[0] > 1;
    y = batchnorm(y, bn, 0, spatial);
  }
  if (use_relu) y = relu(y);
  return y;
}

void ConvBnRelu::register_params(ParamStore& s, const std::string& prefix) {
  s.add(prefix + ".weight", weight);
  s.add(prefix + ".bias", bias);
  if (use_bn) {
    s.add(prefix + ".bn.gamma", bn.gamma);
    s.add(prefix + ".bn.beta", bn.beta);
    s.add(prefix + ".bn.running_mean", bn.running_mean);
    s.add(prefix + ".bn.running_var", bn.running_var);
  }
}

LstmCell LstmCell::make(int input_dim, int hidden_dim, Rng& rng) {
  LstmCell c;
  c.hidden = hidden_dim;
  double std = 1.0 / std::sqrt(static_cast<double>(input_dim + hidden_dim));
  c.w = Tensor::randn({4 * hidden_dim, input_dim + hidden_dim}, rng, std, true);
  c.b = Tensor::zeros({4 * hidden_dim}, true);
  for (int i = hidden_dim; i < 2 * hidden_dim; ++i) c.b.data()[i] = 1.0;  // forget gate
  return c;
}

std::pair<Tensor, Tensor> LstmCell::step(const Tensor& x, const Tensor& h,
                                         const Tensor& c) const {
  Tensor xh = concat({x, h}, 0);
  Tensor gates = add(matmul(w, xh), reshape(b, {4 * hidden, 1}));
  Tensor i = sigmoid(slice(gates, 0, 0, hidden));
  Tensor f = sigmoid(slice(gates, 0, hidden, hidden));
  Tensor g = tanh_op(slice(gates, 0, 2 * hidden, hidden));
  Tensor o = sigmoid(slice(gates, 0, 3 * hidden, hidden));
  Tensor c_new = add(mul(f, c), mul(i, g));
  Tensor h_new = mul(o, tanh_op(c_new));
  return {h_new, c_new};
}

void LstmCell::register_params(ParamStore& s, const std::string& prefix) {
  s.add(prefix + ".weight", w);
  s.add(prefix + ".bias", b);
}

BiLstmLayer BiLstmLayer::make(int input_dim, int hidden_dim, Rng& rng) {
  BiLstmLayer l;
  l.fwd = LstmCell::make(input_dim, hidden_dim, rng);
  l.bwd = LstmCell::make(input_dim, hidden_dim, rng);
  return l;
}

std::vector<Tensor> BiLstmLayer::forward(const std::vector<Tensor>& xs) const {
  size_t n = xs.size();
  int r = fwd.hidden;
  std::vector<Tensor> fs(n), bs(n);
  Tensor h = Tensor::zeros({r, 1}), c = Tensor::zeros({r, 1});
  for (size_t t = 0; t < n; ++t) {
    auto [h2, c2] = fwd.step(xs[t], h, c);
    fs[t] = h = h2;
    c = c2;
  }
  h = Tensor::zeros({r, 1});
  c = Tensor::zeros({r, 1});
  for (size_t t = n; t-- > 0;) {
    auto [h2, c2] = bwd.step(xs[t], h, c);
    bs[t] = h = h2;
    c = c2;
  }
  std::vector<Tensor> out(n);
  for (size_t t = 0; t < n; ++t) out[t] = concat({fs[t], bs[t]}, 0);
  return out;
}

void BiLstmLayer::register_params(ParamStore& s, const std::string& prefix) {
  fwd.register_params(s, prefix + ".fwd");
  bwd.register_params(s, prefix + ".bwd");
}

// ---- model assembly -----------------------------------------------------

Model Model::make(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.cfg = cfg;
  const auto& w = cfg.backbone_widths;
  int c = cfg.channels;
  // kernel-4 stride-2 convs halve even dims exactly
  m.stages.push_back(ConvBnRelu::make(3, w[0], 4, 4, {2, 2, 1, 1}, rng));
  m.stages.push_back(ConvBnRelu::make(w[0], w[0], 4, 4, {2, 2, 1, 1}, rng));
  m.stages.push_back(ConvBnRelu::make(w[0], w[1], 4, 4, {2, 2, 1, 1}, rng));
  m.stages.push_back(ConvBnRelu::make(w[1], w[2], 4, 4, {2, 2, 1, 1}, rng));
  for (int i = 0; i < 3; ++i)
    m.laterals.push_back(
        ConvBnRelu::make(w[i], c, 1, 1, {}, rng, false, false));

  int a6 = cfg.anchors.per_cell() * 6;
  m.det_tower = ConvBnRelu::make(c, c, 3, 3, {1, 1, 1, 1}, rng);
  m.det_out = ConvBnRelu::make(c, a6, 1, 1, {}, rng, false, false);
  // final-layer init: tiny weights keep the raw regression output near zero,
  // and a strongly negative objectness bias keeps the untrained detector quiet
  for (double& v : m.det_out.weight.data()) v *= 0.02;
  for (int a = 0; a < cfg.anchors.per_cell(); ++a)
    m.det_out.bias.data()[a * 6] = -4.0;

  m.local_stack.push_back(ConvBnRelu::make(3, c / 2, 4, 4, {2, 2, 1, 1}, rng));
  m.local_stack.push_back(ConvBnRelu::make(c / 2, c, 4, 4, {2, 2, 1, 1}, rng));
  m.local_stack.push_back(ConvBnRelu::make(c, c, 3, 3, {1, 1, 1, 1}, rng));
  m.local_stack.push_back(ConvBnRelu::make(c, c, 3, 3, {1, 1, 1, 1}, rng));

  m.fusion = FusionParams::make(cfg.fusion, rng);

  int fc_in = cfg.fused_channels();
  int dr = 32;
  m.refine_fc1 =
      Tensor::randn({dr, fc_in}, rng, std::sqrt(2.0 / fc_in), true);
  m.refine_b1 = Tensor::zeros({dr}, true);
  m.refine_fc2 = Tensor::zeros({5, dr}, true);
  m.refine_b2 = Tensor::zeros({5}, true);

  m.mask_head = ConvBnRelu::make(c, 1, 1, 1, {}, rng, false, false);

  int fc = cfg.fused_channels();
  int d = cfg.rec_conv_dim, r = cfg.rec_hidden, e = cfg.rec_embed;
  int ad = cfg.rec_attn_dim;
  m.rec_conv1 = ConvBnRelu::make(fc, d, 4, 3, {2, 1, 1, 1}, rng);
  m.rec_conv2 = ConvBnRelu::make(d, d, 4, 3, {1, 1, 0, 1}, rng);
  m.rec_enc1 = BiLstmLayer::make(d, r, rng);
  m.rec_enc2 = BiLstmLayer::make(2 * r, r, rng);
  m.dec_cell = LstmCell::make(e + 2 * r, r, rng);
  m.dec_embed = Tensor::randn({cfg.vocab, e}, rng, 0.1, true);
  m.attn_enc_w = Tensor::randn({ad, 2 * r}, rng, 1.0 / std::sqrt(2.0 * r), true);
  m.attn_dec_w = Tensor::randn({ad, r}, rng, 1.0 / std::sqrt(1.0 * r), true);
  m.attn_v = Tensor::randn({1, ad}, rng, 1.0 / std::sqrt(1.0 * ad), true);
  m.out_w = Tensor::randn({cfg.vocab, 3 * r}, rng, 1.0 / std::sqrt(3.0 * r), true);
  m.out_b = Tensor::zeros({cfg.vocab}, true);

  // registry, stable order
  for (size_t i = 0; i < m.stages.size(); ++i)
    m.stages[i].register_params(m.params, "backbone.stage" + std::to_string(i));
  for (size_t i = 0; i < m.laterals.size(); ++i)
    m.laterals[i].register_params(m.params, "backbone.lateral" + std::to_string(i));
  m.det_tower.register_params(m.params, "detect.tower");
  m.det_out.register_params(m.params, "detect.out");
  for (size_t i = 0; i < m.local_stack.size(); ++i)
    m.local_stack[i].register_params(m.params, "local.conv" + std::to_string(i));
  m.fusion.register_params(m.params, "fusion");
  m.params.add("detect.refine.fc1.weight", m.refine_fc1);
  m.params.add("detect.refine.fc1.bias", m.refine_b1);
  m.params.add("detect.refine.fc2.weight", m.refine_fc2);
  m.params.add("detect.refine.fc2.bias", m.refine_b2);
  m.mask_head.register_params(m.params, "mask.head");
  m.rec_conv1.register_params(m.params, "recog.conv1");
  m.rec_conv2.register_params(m.params, "recog.conv2");
  m.rec_enc1.register_params(m.params, "recog.enc1");
  m.rec_enc2.register_params(m.params, "recog.enc2");
  m.dec_cell.register_params(m.params, "recog.dec");
  m.params.add("recog.embed", m.dec_embed);
  m.params.add("recog.attn.enc_w", m.attn_enc_w);
  m.params.add("recog.attn.dec_w", m.attn_dec_w);
  m.params.add("recog.attn.v", m.attn_v);
  m.params.add("recog.out.weight", m.out_w);
  m.params.add("recog.out.bias", m.out_b);
  return m;
}

FeaturePyramid Model::backbone_forward(const Tensor& image, bool training) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != 3)
    throw std::invalid_argument("backbone: image must be (3,H,W)");
  if (s[1] % 16 || s[2] % 16)
    throw std::invalid_argument("backbone: image dims must be multiples of 16");
  Tensor x = image;
  FeaturePyramid pyr;
  int strides[4] = {2, 4, 8, 16};
  for (int i = 0; i < 4; ++i) {
    x = stages[i].forward(x, training);
    if (i >= 1)
      pyr.levels.push_back(
          {strides[i], laterals[i - 1].forward(x, training)});
  }
  return pyr;
}

std::vector<DetectorLevelOutput> Model::head_forward(const FeaturePyramid& pyr,
                                                     bool training) {
  std::vector<DetectorLevelOutput> out;
  for (const auto& lv : pyr.levels) {
    Tensor t = det_tower.forward(lv.features, training);
    out.push_back({det_out.forward(t, training), lv.stride});
  }
  return out;
}

std::vector<RotatedBox> Model::level_anchors(int level_h, int level_w,
                                             int stride) const {
  std::vector<RotatedBox> anchors;
  anchors.reserve(static_cast<size_t>(level_h) * level_w *
                  cfg.anchors.per_cell());
  for (int i = 0; i < level_h; ++i)
    for (int j = 0; j < level_w; ++j)
      for (double sc : cfg.anchors.scales)
        for (double ar : cfg.anchors.ratios) {
          double base = cfg.anchors.base_factor * stride * sc;
          RotatedBox a;
          a.cx = (j + 0.5) * stride;
          a.cy = (i + 0.5) * stride;
          a.w = base * std::sqrt(ar);
          a.h = base / std::sqrt(ar);
          a.theta = 0.0;
          anchors.push_back(a);
        }
  return anchors;
}

std::vector<std::pair<RotatedBox, double>> Model::detect(
    const FeaturePyramid& pyr, bool training) {
  auto outs = head_forward(pyr, training);
  std::vector<std::pair<RotatedBox, double>> cands;
  int a_per = cfg.anchors.per_cell();
  for (const auto& lo : outs) {
    int h = lo.raw.shape()[1], w = lo.raw.shape()[2];
    auto anchors = level_anchors(h, w, lo.stride);
    const auto& d = lo.raw.data();
    int64_t hw = static_cast<int64_t>(h) * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int a = 0; a < a_per; ++a) {
          double logit = d[(a * 6) * hw + i * w + j];
          double score = 1.0 / (1.0 + std::exp(-logit));
          if (score < cfg.score_threshold) continue;
          std::vector<double> delta(5);
          for (int k = 0; k < 5; ++k)
            delta[k] = d[(a * 6 + 1 + k) * hw + i * w + j];
          const RotatedBox& anc =
              anchors[(static_cast<size_t>(i) * w + j) * a_per + a];
          cands.emplace_back(decode_box(delta, anc), score);
        }
  }
  auto kept = rotated_nms(cands, cfg.nms_iou);
  std::vector<std::pair<RotatedBox, double>> out;
  for (int k : kept) out.push_back(cands[k]);
  return out;
}

Tensor Model::local_extractor(const Tensor& crop, bool training) {
  if (crop.shape() != Shape{3, cfg.crop_h, cfg.crop_w})
    throw std::invalid_argument("local_extractor: crop shape " +
                                shape_str(crop.shape()) + ", expected (3," +
                                std::to_string(cfg.crop_h) + "," +
                                std::to_string(cfg.crop_w) + ")");
  Tensor x = crop;
  for (auto& l : local_stack) x = l.forward(x, training);
  return x;
}

RotatedBox Model::expanded_roi(const RotatedBox& box) const {
  RotatedBox r = box;
  r.w *= cfg.roi_margin;
  r.h *= cfg.roi_margin;
  return r;
}

Tensor Model::global_roi(const FeaturePyramid& pyr, const RotatedBox& box) {
  return rotated_roi_align(pyr, expanded_roi(box), cfg.fusion.height,
                           cfg.fusion.width, cfg.level_base_size);
}

std::vector<Tensor> Model::fuse(const std::vector<Tensor>& z_global,
                                const std::vector<Tensor>& z_local,
                                bool training) {
  switch (cfg.variant) {
    case FusionVariant::kGlobal:
      return z_global;
    case FusionVariant::kLocal:
      return z_local;
    case FusionVariant::kConcat: {
      std::vector<Tensor> out;
      for (size_t i = 0; i < z_global.size(); ++i)
        out.push_back(concat({z_global[i], z_local[i]}, 0));
      return out;
    }
    case FusionVariant::kGlass:
      return glass_fuse_batch(z_global, z_local, fusion, cfg.fusion, training);
  }
  throw std::logic_error("unreachable");
}

std::vector<Tensor> Model::encode_sequence(const Tensor& fused, bool training) {
  Tensor x = rec_conv1.forward(fused, training);
  x = rec_conv2.forward(x, training);  // (D,1,W)
  int d = x.shape()[0], wlen = x.shape()[2];
  Tensor flat = reshape(x, {d, wlen});
  std::vector<Tensor> steps;
  for (int t = 0; t < wlen; ++t)
    steps.push_back(slice(flat, 1, t, 1));  // (D,1)
  auto e1 = rec_enc1.forward(steps);
  return rec_enc2.forward(e1);
}

Tensor Model::recognize_from_sequence(const std::vector<Tensor>& enc,
                                      const std::vector<int>* teacher,
                                      std::vector<int>* decoded) {
  int n = static_cast<int>(enc.size());
  int r = cfg.rec_hidden;
  Tensor enc_mat = concat(enc, 1);  // (2R, n)
  Tensor enc_proj = matmul(attn_enc_w, enc_mat);  // (A, n)

  int steps = teacher ? static_cast<int>(teacher->size() + 1) : cfg.max_len;
  steps = std::min(steps, cfg.max_len);
  Tensor h = Tensor::zeros({r, 1}), c = Tensor::zeros({r, 1});
  int prev = cfg.go_symbol();
  std::vector<Tensor> rows;
  for (int t = 0; t < steps; ++t) {
    Tensor dec_proj = matmul(attn_dec_w, h);  // (A,1)
    Tensor scores = matmul(attn_v, tanh_op(add(enc_proj, dec_proj)));  // (1,n)
    Tensor alpha = softmax(scores, {1});
    Tensor ctx = matmul(enc_mat, reshape(alpha, {n, 1}));  // (2R,1)
    Tensor emb = reshape(embedding(dec_embed, {prev}), {cfg.rec_embed, 1});
    auto [h2, c2] = dec_cell.step(concat({emb, ctx}, 0), h, c);
    h = h2;
    c = c2;
    Tensor logits =
        add(matmul(out_w, concat({h, ctx}, 0)), reshape(out_b, {cfg.vocab, 1}));
    rows.push_back(reshape(logits, {1, cfg.vocab}));
    int sym;
    if (teacher) {
      sym = t < static_cast<int>(teacher->size()) ? (*teacher)[t]
                                                  : cfg.eos_symbol();
    } else {
      const auto& ld = rows.back().data();
      sym = static_cast<int>(
          std::max_element(ld.begin(), ld.end()) - ld.begin());
    }
    if (decoded) decoded->push_back(sym);
    if (!teacher && sym == cfg.eos_symbol()) break;
    prev = sym;
  }
  return concat(rows, 0);
}

Tensor Model::recognize_teacher(const Tensor& fused,
                                const std::vector<int>& target, bool training) {
  auto enc = encode_sequence(fused, training);
  return recognize_from_sequence(enc, &target, nullptr);
}

std::pair<Tensor, std::vector<int>> Model::recognize_greedy(const Tensor& fused) {
  auto enc = encode_sequence(fused, false);
  std::vector<int> decoded;
  Tensor logits = recognize_from_sequence(enc, nullptr, &decoded);
  return {logits, decoded};
}

Tensor Model::refine_logits(const Tensor& fused) {
  int fc = fused.shape()[0];
  int hw = (int)(fused.numel() / fc);
  Tensor pool_w = Tensor::full({hw, 1}, 1.0 / hw);
  Tensor pooled = matmul(reshape(fused, {fc, hw}), pool_w);  // (Fc,1)
  Tensor h = relu(add(matmul(refine_fc1, pooled),
                      reshape(refine_b1, {(int)refine_b1.numel(), 1})));
  Tensor out = add(matmul(refine_fc2, h), reshape(refine_b2, {5, 1}));
  return reshape(out, {5});
}

RotatedBox Model::refine_box(const RotatedBox& proposal,
                             const Tensor& logits) const {
  const auto& d = logits.data();
  return decode_box({d[0], d[1], d[2], d[3], proposal.theta + d[4]}, proposal);
}

Tensor Model::mask_logits(const Tensor& z_global, bool training) {
  return mask_head.forward(z_global, training);
}

std::string Model::symbols_to_string(const std::vector<int>& symbols) const {
  std::string s;
  for (int sym : symbols) {
    if (sym == cfg.eos_symbol()) break;
    if (sym >= 0 && sym < 16) s.push_back(kGlyphChars[sym]);
  }
  return s;
}

std::vector<int> Model::string_to_symbols(const std::string& s) const {
  std::vector<int> out;
  for (char ch : s) {
    const char* p = std::strchr(kGlyphChars, ch);
    if (!p || ch == '\0')
      throw std::invalid_argument("string_to_symbols: unknown glyph");
    out.push_back(static_cast<int>(p - kGlyphChars));
  }
  return out;
}

std::vector<Detection> Model::spot(const Tensor& image,
                                   const std::vector<RotatedBox>* oracle_boxes) {
  // arbitrary canvases (rotated scenes) are padded right/bottom to the
  // backbone's multiple-of-16 contract with the mean image color, so the
  // padding does not distort feature statistics; box coordinates are
  // unaffected
  Tensor padded = image;
  {
    int h = image.shape()[1], w = image.shape()[2];
    int h16 = (h + 15) / 16 * 16, w16 = (w + 15) / 16 * 16;
    if (h16 != h || w16 != w) {
      padded = Tensor::zeros({3, h16, w16});
      for (int c = 0; c < 3; ++c) {
        double mean = 0;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            mean += image.data()[((int64_t)c * h + y) * w + x];
        mean /= (double)h * w;
        for (int y = 0; y < h16; ++y)
          for (int x = 0; x < w16; ++x)
            padded.data()[((int64_t)c * h16 + y) * w16 + x] =
                (y < h && x < w)
                    ? image.data()[((int64_t)c * h + y) * w + x]
                    : mean;
      }
    }
  }
  FeaturePyramid pyr = backbone_forward(padded, false);
  auto pool_and_fuse = [&](const std::vector<std::pair<RotatedBox, double>>& bs,
                           std::vector<Tensor>& zg_out) {
    std::vector<Tensor> zg, zl;
    for (const auto& [box, score] : bs) {
      zg.push_back(global_roi(pyr, box));
      zl.push_back(local_extractor(
          crop_align_image(image, box, cfg.crop_h, cfg.crop_w), false));
    }
    zg_out = zg;
    return fuse(zg, zl, false);
  };

  std::vector<std::pair<RotatedBox, double>> boxes;
  if (oracle_boxes) {
    for (const auto& b : *oracle_boxes) boxes.emplace_back(b, 1.0);
  } else {
    // refine every first-stage candidate, then suppress again: duplicates
    // that converge onto the same word only overlap after refinement
    auto cands = detect(pyr, false);
    if (!cands.empty()) {
      std::vector<Tensor> zg_c;
      auto fused_c = pool_and_fuse(cands, zg_c);
      std::vector<std::pair<RotatedBox, double>> refined;
      for (size_t i = 0; i < cands.size(); ++i)
        refined.emplace_back(
            refine_box(cands[i].first, refine_logits(fused_c[i])),
            cands[i].second);
      for (int k : rotated_nms(refined, cfg.nms_iou))
        boxes.push_back(refined[k]);
    }
  }
  std::vector<Detection> dets;
  if (boxes.empty()) return dets;

  std::vector<Tensor> zg;
  auto fused = pool_and_fuse(boxes, zg);
  for (size_t i = 0; i < boxes.size(); ++i) {
    Detection d;
    d.box = boxes[i].first;
    d.score = boxes[i].second;
    auto [logits, decoded] = recognize_greedy(fused[i]);
    d.char_logits = logits;
    d.transcript = symbols_to_string(decoded);
    d.mask = sigmoid(mask_logits(zg[i], false));
    dets.push_back(std::move(d));
  }
  return dets;
}

}  // namespace glass
