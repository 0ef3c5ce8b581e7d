#pragma once

#include <optional>
#include <string>
#include <vector>

#include "glass/checkpoint.hpp"
#include "glass/fusion.hpp"
#include "glass/geometry.hpp"
#include "glass/sampling.hpp"
#include "glass/tensor.hpp"

namespace glass {

enum class FusionVariant { kGlobal, kLocal, kConcat, kGlass };

FusionVariant fusion_variant_from_string(const std::string& s);
std::string to_string(FusionVariant v);

struct Detection {
  RotatedBox box;
  double score = 0.0;
  std::string transcript;
  Tensor char_logits;       // (T,V)
  std::optional<Tensor> mask;  // (Hm,Wm) in [0,1]
};

struct AnchorSpec {
  std::vector<double> scales = {1.0, 1.8};
  std::vector<double> ratios = {1.8, 3.2};  // w/h
  double base_factor = 4.0;                 // base size = factor * stride
  int per_cell() const {
    return static_cast<int>(scales.size() * ratios.size());
  }
};

struct ModelConfig {
  int channels = 32;                        // shared pyramid channel count C
  std::vector<int> backbone_widths = {16, 32, 64};
  AnchorSpec anchors;
  FusionConfig fusion{32, 8, 32, 8};        // C, H, W, k
  int crop_h = 32, crop_w = 128;            // local path pixel crop
  int vocab = 18;                           // 16 glyphs + EOS + GO
  int max_len = 8;                          // T, includes the EOS step
  int rec_conv_dim = 32;
  int rec_hidden = 32;
  int rec_embed = 16;
  int rec_attn_dim = 32;
  double score_threshold = 0.5;
  double nms_iou = 0.3;
  double roi_margin = 1.25;                 // global-roi context expansion
  double level_base_size = 32.0;
  FusionVariant variant = FusionVariant::kGlass;

  int eos_symbol() const { return vocab - 2; }
  int go_symbol() const { return vocab - 1; }
  int fused_channels() const {
    return (variant == FusionVariant::kConcat || variant == FusionVariant::kGlass)
               ? 2 * channels
               : channels;
  }
  void validate() const;
};

// Anchor box regression transform. Anchors always have theta = 0.
std::vector<double> encode_box(const RotatedBox& gt, const RotatedBox& anchor);
RotatedBox decode_box(const std::vector<double>& delta, const RotatedBox& anchor);

// Refinement parametrization vs a rotated proposal; the angle slot holds the
// canonicalized angle difference. Inverse of Model::refine_box.
std::vector<double> encode_refinement(const RotatedBox& gt,
                                      const RotatedBox& proposal);

struct ConvBnRelu {
  Tensor weight, bias;
  BatchNormParams bn;
  Conv2dOpts opts;
  bool use_bn = true;
  bool use_relu = true;

  static ConvBnRelu make(int cin, int cout, int kh, int kw, Conv2dOpts opts,
                         Rng& rng, bool use_bn = true, bool use_relu = true);
  Tensor forward(const Tensor& x, bool training);
  void register_params(ParamStore& s, const std::string& prefix);
};

struct LstmCell {
  Tensor w;  // (4R, in+R)
  Tensor b;  // (4R)
  int hidden = 0;

  static LstmCell make(int input_dim, int hidden_dim, Rng& rng);
  // x (in,1), h (R,1), c (R,1) -> new (h, c)
  std::pair<Tensor, Tensor> step(const Tensor& x, const Tensor& h,
                                 const Tensor& c) const;
  void register_params(ParamStore& s, const std::string& prefix);
};

struct BiLstmLayer {
  LstmCell fwd, bwd;
  static BiLstmLayer make(int input_dim, int hidden_dim, Rng& rng);
  // inputs: sequence of (in,1) -> sequence of (2R,1)
  std::vector<Tensor> forward(const std::vector<Tensor>& xs) const;
  void register_params(ParamStore& s, const std::string& prefix);
};

// Per-level raw detector head output plus its anchors.
struct DetectorLevelOutput {
  Tensor raw;  // (A*6, H, W): objectness logit + 5 deltas per anchor
  int stride = 1;
};

struct Model {
  ModelConfig cfg;

  // backbone: stem + 3 pyramid stages + lateral 1x1s
  std::vector<ConvBnRelu> stages;    // strides 2,4,8,16
  std::vector<ConvBnRelu> laterals;  // widths -> C
  // detection head, shared across levels
  ConvBnRelu det_tower;
  ConvBnRelu det_out;                // 1x1 -> A*6, no bn/relu
  // local crop extractor
  std::vector<ConvBnRelu> local_stack;
  // fusion
  FusionParams fusion;
  // second-stage box refinement from fused roi features
  Tensor refine_fc1, refine_b1;      // (Dr, Fc), (Dr)
  Tensor refine_fc2, refine_b2;      // (5, Dr) zero-init: identity at start
  // mask branch
  ConvBnRelu mask_head;              // 1x1 C -> 1 logits, no bn/relu
  // recognition head
  ConvBnRelu rec_conv1, rec_conv2;
  BiLstmLayer rec_enc1, rec_enc2;
  LstmCell dec_cell;
  Tensor dec_embed;                  // (V,E)
  Tensor attn_enc_w, attn_dec_w, attn_v;  // additive attention
  Tensor out_w, out_b;               // (V, R+2R), (V)

  ParamStore params;

  static Model make(const ModelConfig& cfg, uint64_t seed);

  FeaturePyramid backbone_forward(const Tensor& image, bool training);
  std::vector<DetectorLevelOutput> head_forward(const FeaturePyramid& pyr,
                                                bool training);
  std::vector<RotatedBox> level_anchors(int level_h, int level_w, int stride) const;
  std::vector<std::pair<RotatedBox, double>> detect(const FeaturePyramid& pyr,
                                                    bool training = false);

  Tensor local_extractor(const Tensor& crop, bool training);
  // global roi with context margin applied
  Tensor global_roi(const FeaturePyramid& pyr, const RotatedBox& box);
  RotatedBox expanded_roi(const RotatedBox& box) const;

  // Fuses per the configured variant.
  std::vector<Tensor> fuse(const std::vector<Tensor>& z_global,
                           const std::vector<Tensor>& z_local, bool training);

  // Residual box deltas predicted from pooled fused roi features; decoded
  // against the proposal box. Zero output at init leaves proposals unchanged.
  Tensor refine_logits(const Tensor& fused);
  RotatedBox refine_box(const RotatedBox& proposal, const Tensor& logits) const;

  // Teacher-forced logits over len(target)+1 steps (EOS step included).
  Tensor recognize_teacher(const Tensor& fused, const std::vector<int>& target,
                           bool training);
  // Greedy decode, stops at EOS, emits at most max_len steps.
  std::pair<Tensor, std::vector<int>> recognize_greedy(const Tensor& fused);

  Tensor mask_logits(const Tensor& z_global, bool training);

  std::vector<Detection> spot(const Tensor& image,
                              const std::vector<RotatedBox>* oracle_boxes = nullptr);

  std::string symbols_to_string(const std::vector<int>& symbols) const;
  std::vector<int> string_to_symbols(const std::string& s) const;

 private:
  Tensor recognize_from_sequence(const std::vector<Tensor>& enc,
                                 const std::vector<int>* teacher,
                                 std::vector<int>* decoded);
  std::vector<Tensor> encode_sequence(const Tensor& fused, bool training);
};

// Glyph alphabet shared by the synthetic data generator and the recognizer.
extern const char kGlyphChars[17];  // "0123456789ABCDEF"

}  // namespace glass
