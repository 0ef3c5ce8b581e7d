#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "glass/geometry.hpp"
#include "glass/rng.hpp"

using namespace glass;

static RotatedBox random_box(Rng& rng) {
  RotatedBox b;
  b.cx = rng.uniform(-5, 5);
  b.cy = rng.uniform(-5, 5);
  b.w = rng.uniform(0.5, 6.0);
  b.h = rng.uniform(0.5, 6.0);
  b.theta = rng.uniform(-M_PI, M_PI);
  return b;
}

// Rasterization IoU oracle on an n x n grid over the union bounding box.
static double raster_iou(const RotatedBox& a, const RotatedBox& b, int n) {
  auto pa = box_to_polygon(a);
  auto pb = box_to_polygon(b);
  double x0 = 1e18, y0 = 1e18, x1 = -1e18, y1 = -1e18;
  for (const auto& poly : {pa, pb})
    for (const auto& p : poly) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
  auto inside = [](const Polygon& poly, double x, double y) {
    bool in = false;
    size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
      if ((poly[i].y > y) != (poly[j].y > y) &&
          x < (poly[j].x - poly[i].x) * (y - poly[i].y) / (poly[j].y - poly[i].y) +
                  poly[i].x)
        in = !in;
    }
    return in;
  };
  long inter = 0, uni = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double x = x0 + (j + 0.5) * (x1 - x0) / n;
      double y = y0 + (i + 0.5) * (y1 - y0) / n;
      bool ia = inside(pa, x, y), ib = inside(pb, x, y);
      if (ia && ib) ++inter;
      if (ia || ib) ++uni;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

TEST_CASE("canonicalize_angle") {
  CHECK(canonicalize_angle(0.0) == 0.0);
  CHECK(canonicalize_angle(M_PI) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(canonicalize_angle(2.0) == doctest::Approx(2.0 - M_PI).epsilon(1e-12));
  CHECK_THROWS_AS(canonicalize_angle(NAN), std::invalid_argument);

  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    double t = rng.uniform(-10, 10);
    double c = canonicalize_angle(t);
    CHECK(c >= -M_PI / 2);
    CHECK(c < M_PI / 2);
    CHECK(canonicalize_angle(c) == c);  // idempotent
    // same angle mod pi
    CHECK(std::fabs(std::remainder(c - t, M_PI)) < 1e-9);
  }
}

TEST_CASE("box_to_polygon") {
  auto p = box_to_polygon({0, 0, 2, 1, 0});
  CHECK(p[0].x == doctest::Approx(-1));
  CHECK(p[0].y == doctest::Approx(-0.5));
  CHECK(p[2].x == doctest::Approx(1));
  CHECK(p[2].y == doctest::Approx(0.5));

  auto q = box_to_polygon({0, 0, 2, 1, M_PI / 2});
  for (const auto& v : q) {
    CHECK(std::fabs(std::fabs(v.x) - 0.5) < 1e-12);
    CHECK(std::fabs(std::fabs(v.y) - 1.0) < 1e-12);
  }

  // rotation-matrix oracle at 45 degrees
  RotatedBox b{5, 5, 2, 2, M_PI / 4};
  auto r = box_to_polygon(b);
  double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
  double ux[4] = {-1, 1, 1, -1}, uy[4] = {-1, -1, 1, 1};
  for (int i = 0; i < 4; ++i) {
    CHECK(r[i].x == doctest::Approx(5 + c * ux[i] - s * uy[i]).epsilon(1e-12));
    CHECK(r[i].y == doctest::Approx(5 + s * ux[i] + c * uy[i]).epsilon(1e-12));
  }

  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    RotatedBox bx = random_box(rng);
    auto poly = box_to_polygon(bx);
    CHECK(std::fabs(polygon_area(poly)) == doctest::Approx(bx.w * bx.h).epsilon(1e-9));
    double mx = 0, my = 0;
    for (const auto& v : poly) {
      mx += v.x / 4;
      my += v.y / 4;
    }
    CHECK(mx == doctest::Approx(bx.cx).epsilon(1e-9));
    CHECK(my == doctest::Approx(bx.cy).epsilon(1e-9));
  }
}

TEST_CASE("polygon_intersection_area") {
  Polygon unit = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CHECK(polygon_intersection_area(unit, unit) == doctest::Approx(1.0));
  Polygon far = {{5, 5}, {6, 5}, {6, 6}, {5, 6}};
  CHECK(polygon_intersection_area(unit, far) == 0.0);

  // unit square vs itself rotated 45 degrees: regular octagon, 2(sqrt(2)-1)
  auto rot = box_to_polygon({0.5, 0.5, 1, 1, M_PI / 4});
  double area = polygon_intersection_area(unit, rot);
  CHECK(area == doctest::Approx(2 * (std::sqrt(2.0) - 1)).epsilon(1e-9));

  Polygon degenerate = {{0, 0}, {1, 0}};
  CHECK(polygon_intersection_area(degenerate, unit) == 0.0);
}

TEST_CASE("rotated_iou") {
  RotatedBox a{1, 2, 3, 1, 0.4};
  CHECK(rotated_iou(a, a) == 1.0);
  RotatedBox flipped = a;
  flipped.theta = a.theta + M_PI;
  CHECK(rotated_iou(a, flipped) == 1.0);
  CHECK(rotated_iou(a, {50, 50, 1, 1, 0}) == 0.0);

  RotatedBox sq{0, 0, 1, 1, 0}, sq45{0, 0, 1, 1, M_PI / 4};
  double oct = 2 * (std::sqrt(2.0) - 1);
  CHECK(rotated_iou(sq, sq45) == doctest::Approx(oct / (2 - oct)).epsilon(1e-9));
}

TEST_CASE("rotated_iou properties") {
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    RotatedBox a = random_box(rng), b = random_box(rng);
    double ab = rotated_iou(a, b);
    CHECK(ab == rotated_iou(b, a));
    RotatedBox a2 = a;
    a2.theta += M_PI;
    CHECK(rotated_iou(a2, b) == doctest::Approx(ab).epsilon(1e-9));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("clipping IoU matches rasterization oracle") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    RotatedBox a = random_box(rng), b = random_box(rng);
    // keep them in contact often enough to exercise the clipper
    b.cx = a.cx + rng.uniform(-4, 4);
    b.cy = a.cy + rng.uniform(-4, 4);
    double exact = rotated_iou(a, b);
    double approx = raster_iou(a, b, 512);
    CHECK(std::fabs(exact - approx) < 1e-2);
  }
}

TEST_CASE("rotated_nms") {
  std::vector<std::pair<RotatedBox, double>> one = {{{0, 0, 2, 1, 0}, 0.7}};
  CHECK(rotated_nms(one, 0.5) == std::vector<int>{0});

  std::vector<std::pair<RotatedBox, double>> two = {{{0, 0, 2, 1, 0}, 0.9},
                                                    {{0, 0, 2, 1, 0}, 0.8}};
  CHECK(rotated_nms(two, 0.5) == std::vector<int>{0});

  // #1 suppresses #2 but not #3
  std::vector<std::pair<RotatedBox, double>> three = {
      {{0, 0, 2, 2, 0}, 0.9}, {{0.2, 0, 2, 2, 0}, 0.8}, {{5, 0, 2, 2, 0}, 0.7}};
  CHECK(rotated_nms(three, 0.5) == std::vector<int>{0, 2});

  // brute-force oracle: greedy over score order
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<RotatedBox, double>> boxes;
    for (int i = 0; i < 8; ++i)
      boxes.emplace_back(random_box(rng), rng.uniform(0, 1));
    auto got = rotated_nms(boxes, 0.3);
    // oracle
    std::vector<int> order(boxes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
      return boxes[i].second > boxes[j].second;
    });
    std::vector<int> keep;
    for (int i : order) {
      bool ok = true;
      for (int j : keep)
        if (rotated_iou(boxes[i].first, boxes[j].first) > 0.3) ok = false;
      if (ok) keep.push_back(i);
    }
    std::sort(keep.begin(), keep.end());
    CHECK(got == keep);
  }
}

TEST_CASE("crop_affine") {
  // axis-aligned: pure translation when output matches box dims
  RotatedBox b{10, 20, 8, 4, 0};
  Affine2x3 m = crop_affine(b, 4, 8);
  CHECK(m.a == doctest::Approx(1.0));
  CHECK(m.e == doctest::Approx(1.0));
  CHECK(m.b == doctest::Approx(0.0));
  CHECK(m.d == doctest::Approx(0.0));
  Point p = m.apply(0, 0);
  CHECK(p.x == doctest::Approx(6.0));
  CHECK(p.y == doctest::Approx(18.0));

  // quarter turn: corners map onto box corners
  RotatedBox q{3, 4, 6, 2, M_PI / 2};
  Affine2x3 mq = crop_affine(q, 2, 6);
  auto poly = box_to_polygon({3, 4, 6, 2, canonicalize_angle(M_PI / 2)});
  Point c0 = mq.apply(0, 0);
  CHECK(c0.x == doctest::Approx(poly[0].x).epsilon(1e-12));
  CHECK(c0.y == doctest::Approx(poly[0].y).epsilon(1e-12));

  // random boxes: corner-mapping oracle, center maps to center
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    RotatedBox r = random_box(rng);
    int oh = rng.uniform_int(1, 16), ow = rng.uniform_int(1, 16);
    Affine2x3 mr = crop_affine(r, oh, ow);
    RotatedBox canon = r;
    canon.theta = canonicalize_angle(r.theta);
    auto corners = box_to_polygon(canon);
    const double us[4] = {0.0, double(ow), double(ow), 0.0};
    const double vs[4] = {0.0, 0.0, double(oh), double(oh)};
    for (int k = 0; k < 4; ++k) {
      Point g = mr.apply(us[k], vs[k]);
      CHECK(g.x == doctest::Approx(corners[k].x).epsilon(1e-9));
      CHECK(g.y == doctest::Approx(corners[k].y).epsilon(1e-9));
    }
    Point ctr = mr.apply(ow / 2.0, oh / 2.0);
    CHECK(ctr.x == doctest::Approx(r.cx).epsilon(1e-9));
    CHECK(ctr.y == doctest::Approx(r.cy).epsilon(1e-9));
  }
}
