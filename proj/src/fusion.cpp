#include "glass/fusion.hpp"

#include <stdexcept>

namespace glass {

void FusionConfig::validate() const {
  if (blocks < 1) throw std::invalid_argument("fusion: k must be >= 1");
  if (channels < 1 || height < 1 || width < 1)
    throw std::invalid_argument("fusion: bad dimensions");
  if (channels % blocks != 0)
    throw std::invalid_argument("fusion: k must divide C (C=" +
                                std::to_string(channels) +
                                ", k=" + std::to_string(blocks) + ")");
}

FusionParams FusionParams::make(const FusionConfig& cfg, Rng& rng) {
  cfg.validate();
  FusionParams p;
  int m = cfg.block_channels();
  for (int i = 0; i < cfg.blocks; ++i)
    p.v.push_back(Tensor::randn({2 * m}, rng, 0.1, true));
  p.bn = BatchNormParams::make(2 * cfg.channels);
  // zero init keeps the block an exact identity residual at the start
  p.transform_w = Tensor::zeros({2 * cfg.channels, 2 * cfg.channels, 1, 1}, true);
  p.transform_b = Tensor::zeros({2 * cfg.channels}, true);
  return p;
}

void FusionParams::register_params(ParamStore& store, const std::string& prefix) {
  for (size_t i = 0; i < v.size(); ++i)
    store.add(prefix + ".v." + std::to_string(i), v[i]);
  store.add(prefix + ".bn.gamma", bn.gamma);
  store.add(prefix + ".bn.beta", bn.beta);
  store.add(prefix + ".bn.running_mean", bn.running_mean);
  store.add(prefix + ".bn.running_var", bn.running_var);
  store.add(prefix + ".transform.weight", transform_w);
  store.add(prefix + ".transform.bias", transform_b);
}

Tensor interleave_concat(const Tensor& z_global, const Tensor& z_local,
                         const FusionConfig& cfg) {
  cfg.validate();
  const Shape want = {cfg.channels, cfg.height, cfg.width};
  if (z_global.shape() != want || z_local.shape() != want)
    throw std::invalid_argument("interleave_concat: inputs " +
                                shape_str(z_global.shape()) + "/" +
                                shape_str(z_local.shape()) + " vs config " +
                                shape_str(want));
  return channel_interleave(z_global, z_local);
}

Tensor block_attention(const Tensor& z_cat_block, const Tensor& v_i) {
  const Shape& s = z_cat_block.shape();
  if (s.size() != 3 || v_i.shape().size() != 1 || v_i.shape()[0] != s[0])
    throw std::invalid_argument("block_attention: shape mismatch");
  int ch = s[0];
  int hw = s[1] * s[2];
  Tensor z_flat = reshape(z_cat_block, {ch, hw});
  Tensor scores = matmul(reshape(v_i, {1, ch}), z_flat);      // (1,HW)
  Tensor a = softmax(scores, {1});
  Tensor y = matmul(z_flat, reshape(a, {hw, 1}));             // (ch,1)
  return reshape(y, {ch});
}

std::vector<Tensor> glass_fuse_batch(const std::vector<Tensor>& z_global,
                                     const std::vector<Tensor>& z_local,
                                     FusionParams& params,
                                     const FusionConfig& cfg, bool training) {
  if (z_global.size() != z_local.size())
    throw std::invalid_argument("glass_fuse_batch: input count mismatch");
  size_t n = z_global.size();
  if (n == 0) return {};
  int m2 = 2 * cfg.block_channels();
  int c2 = 2 * cfg.channels;

  std::vector<Tensor> cats, stacked;
  for (size_t d = 0; d < n; ++d) {
    Tensor z_cat = interleave_concat(z_global[d], z_local[d], cfg);
    std::vector<Tensor> ys;
    for (int i = 0; i < cfg.blocks; ++i) {
      Tensor block = slice(z_cat, 0, m2 * i, m2);
      ys.push_back(block_attention(block, params.v[i]));
    }
    stacked.push_back(reshape(concat(ys, 0), {1, c2, 1, 1}));
    cats.push_back(std::move(z_cat));
  }
  Tensor y_batch = n > 1 ? concat(stacked, 0) : stacked[0];
  // frozen statistics: the norm is a learnable per-channel affine, so the
  // batched and per-detection paths produce identical values
  Tensor y_norm = batchnorm(y_batch, params.bn, 1, false);
  Tensor y_act = relu(y_norm);

  std::vector<Tensor> out;
  for (size_t d = 0; d < n; ++d) {
    Tensor yd = reshape(slice(y_act, 0, static_cast<int>(d), 1), {c2, 1, 1});
    Tensor t = conv2d(yd, params.transform_w, params.transform_b, {});
    out.push_back(add(cats[d], t));  // (2C,H,W) + (2C,1,1) broadcast
  }
  return out;
}

Tensor glass_fuse(const Tensor& z_global, const Tensor& z_local,
                  FusionParams& params, const FusionConfig& cfg) {
  return glass_fuse_batch({z_global}, {z_local}, params, cfg, false)[0];
}

}  // namespace glass
