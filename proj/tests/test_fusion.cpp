#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "glass/fusion.hpp"

using namespace glass;

static FusionConfig cfg_small() { return {4, 2, 3, 2}; }

TEST_CASE("interleave_concat channel order") {
  FusionConfig cfg = cfg_small();  // C=4, k=2, m=2
  Tensor g = Tensor::zeros({4, 2, 3});
  Tensor l = Tensor::zeros({4, 2, 3});
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 6; ++i) {
      g.data()[c * 6 + i] = 10 + c;
      l.data()[c * 6 + i] = 20 + c;
    }
  Tensor z = interleave_concat(g, l, cfg);
  REQUIRE(z.shape() == Shape{8, 2, 3});
  double want[8] = {10, 20, 11, 21, 12, 22, 13, 23};
  for (int c = 0; c < 8; ++c) CHECK(z.at({c, 0, 0}) == want[c]);

  CHECK_THROWS_AS(interleave_concat(Tensor::zeros({3, 2, 3}), l, cfg),
                  std::invalid_argument);
}

TEST_CASE("deinterleave inverts interleave bit-exactly") {
  Rng rng(1);
  FusionConfig cfg{6, 3, 4, 3};
  Tensor g = Tensor::randn({6, 3, 4}, rng, 1.0);
  Tensor l = Tensor::randn({6, 3, 4}, rng, 1.0);
  auto [g2, l2] = channel_deinterleave(interleave_concat(g, l, cfg));
  CHECK(g2.data() == g.data());
  CHECK(l2.data() == l.data());
}

TEST_CASE("k=1 single block alternates all channels") {
  FusionConfig cfg{3, 1, 2, 1};
  Tensor g = Tensor::from_data({3, 1, 2}, {1, 1, 2, 2, 3, 3});
  Tensor l = Tensor::from_data({3, 1, 2}, {4, 4, 5, 5, 6, 6});
  Tensor z = interleave_concat(g, l, cfg);
  for (int c = 0; c < 6; ++c) {
    double want = (c % 2 == 0) ? 1 + c / 2 : 4 + c / 2;
    CHECK(z.at({c, 0, 0}) == want);
  }
}

TEST_CASE("block_attention singleton and uniform cases") {
  // H=W=1: softmax of one element, y equals the single column
  Tensor z = Tensor::from_data({3, 1, 1}, {1.5, -2.0, 0.25});
  Tensor v = Tensor::from_data({3}, {0.3, 0.1, -0.7});
  Tensor y = block_attention(z, v);
  for (int c = 0; c < 3; ++c) CHECK(y.data()[c] == z.data()[c]);

  // v = 0: uniform attention -> spatial mean per channel
  Rng rng(2);
  Tensor z2 = Tensor::randn({2, 2, 2}, rng, 1.0);
  Tensor y2 = block_attention(z2, Tensor::zeros({2}));
  for (int c = 0; c < 2; ++c) {
    double mean = 0;
    for (int p = 0; p < 4; ++p) mean += z2.data()[c * 4 + p] / 4;
    CHECK(y2.data()[c] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("block_attention matches direct formula oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    int ch = 4, h = 3, w = 5;
    Tensor z = Tensor::randn({ch, h, w}, rng, 1.0);
    Tensor v = Tensor::randn({ch}, rng, 1.0);
    Tensor y = block_attention(z, v);
    // direct double-loop evaluation
    int hw = h * w;
    std::vector<double> scores(hw, 0.0);
    for (int p = 0; p < hw; ++p)
      for (int c = 0; c < ch; ++c) scores[p] += v.data()[c] * z.data()[c * hw + p];
    double mx = *std::max_element(scores.begin(), scores.end());
    double denom = 0;
    for (double s : scores) denom += std::exp(s - mx);
    for (int c = 0; c < ch; ++c) {
      double acc = 0;
      for (int p = 0; p < hw; ++p)
        acc += z.data()[c * hw + p] * std::exp(scores[p] - mx) / denom;
      CHECK(y.data()[c] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention map sums to one for every block") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    int k_choices[] = {1, 2, 4, 8};
    int c = 8, k = k_choices[rng.uniform_int(4)];
    int h = rng.uniform_int(1, 4), w = rng.uniform_int(1, 4);
    FusionConfig cfg{c, h, w, k};
    int m2 = 2 * cfg.block_channels();
    Tensor z = Tensor::randn({m2, h, w}, rng, 2.0);
    Tensor v = Tensor::randn({m2}, rng, 1.0);
    Tensor scores = matmul(reshape(v, {1, m2}), reshape(z, {m2, h * w}));
    Tensor a = softmax(scores, {1});
    double s = 0;
    for (double x : a.data()) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("glass_fuse identity with zero transform") {
  Rng rng(5);
  FusionConfig cfg = cfg_small();
  FusionParams p = FusionParams::make(cfg, rng);
  Tensor g = Tensor::randn({4, 2, 3}, rng, 1.0);
  Tensor l = Tensor::randn({4, 2, 3}, rng, 1.0);
  Tensor fused = glass_fuse(g, l, p, cfg);
  Tensor cat = interleave_concat(g, l, cfg);
  CHECK(fused.data() == cat.data());  // bit-exact residual identity
}

TEST_CASE("glass_fuse zero inputs give zero output") {
  Rng rng(6);
  FusionConfig cfg = cfg_small();
  FusionParams p = FusionParams::make(cfg, rng);
  Tensor z = Tensor::zeros({4, 2, 3});
  Tensor fused = glass_fuse(z, z, p, cfg);
  for (double v : fused.data()) CHECK(v == 0.0);
}

TEST_CASE("glass_fuse matches scripted evaluation of the three equations") {
  Rng rng(7);
  FusionConfig cfg = cfg_small();
  FusionParams p = FusionParams::make(cfg, rng);
  // non-trivial transform and bn stats
  for (auto& v : p.transform_w.data()) v = rng.normal(0, 0.3);
  for (auto& v : p.transform_b.data()) v = rng.normal(0, 0.1);
  p.bn.running_mean.data() = {0.1, -0.2, 0.3, 0.0, 0.2, -0.1, 0.05, 0.4};
  p.bn.running_var.data() = {1.1, 0.9, 1.3, 0.8, 1.0, 1.2, 0.95, 1.05};
  Tensor g = Tensor::randn({4, 2, 3}, rng, 1.0);
  Tensor l = Tensor::randn({4, 2, 3}, rng, 1.0);
  Tensor fused = glass_fuse(g, l, p, cfg);

  // scripted: interleave, per-block softmax attention, bn+relu+1x1, residual
  int c2 = 8, hw = 6, m2 = 4;
  std::vector<double> zcat(c2 * hw);
  for (int j = 0; j < 4; ++j)
    for (int q = 0; q < hw; ++q) {
      zcat[(2 * j) * hw + q] = g.data()[j * hw + q];
      zcat[(2 * j + 1) * hw + q] = l.data()[j * hw + q];
    }
  std::vector<double> y(c2);
  for (int b = 0; b < 2; ++b) {
    std::vector<double> sc(hw, 0.0);
    for (int q = 0; q < hw; ++q)
      for (int c = 0; c < m2; ++c)
        sc[q] += p.v[b].data()[c] * zcat[(b * m2 + c) * hw + q];
    double mx = *std::max_element(sc.begin(), sc.end());
    double den = 0;
    for (double s : sc) den += std::exp(s - mx);
    for (int c = 0; c < m2; ++c) {
      double acc = 0;
      for (int q = 0; q < hw; ++q)
        acc += zcat[(b * m2 + c) * hw + q] * std::exp(sc[q] - mx) / den;
      y[b * m2 + c] = acc;
    }
  }
  for (int c = 0; c < c2; ++c) {
    double xh = (y[c] - p.bn.running_mean.data()[c]) /
                std::sqrt(p.bn.running_var.data()[c] + 1e-5);
    y[c] = std::max(0.0, xh);  // gamma 1, beta 0
  }
  for (int co = 0; co < c2; ++co) {
    double t = p.transform_b.data()[co];
    for (int ci = 0; ci < c2; ++ci)
      t += p.transform_w.data()[co * c2 + ci] * y[ci];
    for (int q = 0; q < hw; ++q)
      CHECK(fused.data()[co * hw + q] ==
            doctest::Approx(zcat[co * hw + q] + t).epsilon(1e-10));
  }
}

TEST_CASE("gradients through the fusion block") {
  Rng rng(8);
  FusionConfig cfg{4, 2, 2, 2};
  FusionParams p = FusionParams::make(cfg, rng);
  for (auto& v : p.transform_w.data()) v = rng.normal(0, 0.3);
  Tensor g0 = Tensor::randn({4, 2, 2}, rng, 1.0);
  Tensor l0 = Tensor::randn({4, 2, 2}, rng, 1.0);

  auto head = [&](FusionParams& params, const Tensor& g, const Tensor& l) {
    Tensor fused = glass_fuse(g, l, params, cfg);
    return sum_all(mul(fused, fused));
  };
  // wrt z_global
  CHECK(finite_diff_gradcheck(
            [&](const Tensor& t) { return head(p, t, l0); }, g0) < 1e-4);
  // wrt z_local
  CHECK(finite_diff_gradcheck(
            [&](const Tensor& t) { return head(p, g0, t); }, l0) < 1e-4);
  // wrt attention query v0
  CHECK(finite_diff_gradcheck(
            [&](const Tensor& t) {
              FusionParams q = p;
              q.v[0] = t;
              return head(q, g0, l0);
            },
            p.v[0]) < 1e-4);
  // wrt transform weights
  CHECK(finite_diff_gradcheck(
            [&](const Tensor& t) {
              FusionParams q = p;
              q.transform_w = reshape(t, {8, 8, 1, 1});
              return head(q, g0, l0);
            },
            reshape(p.transform_w, {64})) < 1e-4);
}

TEST_CASE("channel-pair permutation equivariance of block attention") {
  Rng rng(9);
  int m2 = 6, h = 2, w = 3;
  Tensor z = Tensor::randn({m2, h, w}, rng, 1.0);
  Tensor v = Tensor::randn({m2}, rng, 1.0);
  // swap channel pairs (0,1) <-> (4,5) in both z and v
  std::vector<int> perm = {4, 5, 2, 3, 0, 1};
  Tensor zp = Tensor::zeros({m2, h, w});
  Tensor vp = Tensor::zeros({m2});
  for (int c = 0; c < m2; ++c) {
    vp.data()[c] = v.data()[perm[c]];
    for (int q = 0; q < h * w; ++q)
      zp.data()[c * h * w + q] = z.data()[perm[c] * h * w + q];
  }
  Tensor y = block_attention(z, v);
  Tensor yp = block_attention(zp, vp);
  for (int c = 0; c < m2; ++c)
    CHECK(yp.data()[c] == doctest::Approx(y.data()[perm[c]]).epsilon(1e-12));
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(FusionConfig({5, 2, 2, 2}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(FusionConfig({4, 2, 2, 0}).validate(), std::invalid_argument);
  FusionConfig ok{8, 2, 2, 8};  // k == C edge case
  ok.validate();
  CHECK(ok.block_channels() == 1);
}

TEST_CASE("output shape is (2C,H,W) across configs") {
  Rng rng(10);
  for (FusionConfig cfg : {FusionConfig{2, 1, 1, 1}, FusionConfig{6, 2, 4, 3},
                           FusionConfig{8, 3, 2, 8}}) {
    FusionParams p = FusionParams::make(cfg, rng);
    Tensor g = Tensor::randn({cfg.channels, cfg.height, cfg.width}, rng, 1.0);
    Tensor l = Tensor::randn({cfg.channels, cfg.height, cfg.width}, rng, 1.0);
    Tensor fused = glass_fuse(g, l, p, cfg);
    CHECK(fused.shape() == Shape{2 * cfg.channels, cfg.height, cfg.width});
  }
}
