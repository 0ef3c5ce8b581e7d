#pragma once

#include <string>
#include <vector>

#include "glass/checkpoint.hpp"
#include "glass/tensor.hpp"

namespace glass {

// Global-to-local attention fusion of two (C,H,W) maps into one (2C,H,W) map:
// interleaved channel concatenation split into k blocks, per-block spatial
// attention, and a broadcast residual 1x1 transform.
struct FusionConfig {
  int channels = 32;   // C of each input map
  int height = 8;
  int width = 32;
  int blocks = 8;      // k; must divide C

  int block_channels() const { return channels / blocks; }  // m
  void validate() const;
};

struct FusionParams {
  std::vector<Tensor> v;       // k attention queries, each (2m)
  BatchNormParams bn;          // over 2C channels of the stacked vector
  Tensor transform_w;          // (2C,2C,1,1) 1x1 conv, zero-initialized
  Tensor transform_b;          // (2C)

  static FusionParams make(const FusionConfig& cfg, Rng& rng);
  void register_params(ParamStore& store, const std::string& prefix = "fusion");
};

// Eq-by-eq pieces. interleave_concat returns (2C,H,W) with channel order
// g0,l0,g1,l1,...; block i occupies channels [2*m*i, 2*m*(i+1)).
Tensor interleave_concat(const Tensor& z_global, const Tensor& z_local,
                         const FusionConfig& cfg);

// Spatial attention over one block: a = softmax over H*W of v_i . z, then
// y_i[c] = sum_p z[c,p] * a[p]. Returns (2m).
Tensor block_attention(const Tensor& z_cat_block, const Tensor& v_i);

// Full block for one detection. The norm uses the stored stats as a frozen
// per-channel affine, so single and batched calls agree exactly.
Tensor glass_fuse(const Tensor& z_global, const Tensor& z_local,
                  FusionParams& params, const FusionConfig& cfg);

// Batched variant over all detections of a scene.
std::vector<Tensor> glass_fuse_batch(const std::vector<Tensor>& z_global,
                                     const std::vector<Tensor>& z_local,
                                     FusionParams& params,
                                     const FusionConfig& cfg, bool training);

}  // namespace glass
