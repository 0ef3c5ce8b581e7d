#include "glass/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace glass {

double canonicalize_angle(double theta) {
  if (!std::isfinite(theta))
    throw std::invalid_argument("canonicalize_angle: non-finite angle");
  double t = std::fmod(theta + M_PI / 2.0, M_PI);
  if (t < 0) t += M_PI;
  return t - M_PI / 2.0;
}

double wrap_angle_pi(double theta) {
  if (!std::isfinite(theta))
    throw std::invalid_argument("wrap_angle_pi: non-finite angle");
  double t = std::fmod(theta, 2.0 * M_PI);
  if (t <= -M_PI) t += 2.0 * M_PI;
  if (t > M_PI) t -= 2.0 * M_PI;
  return t;
}

std::pair<double, double> cos_sin_exact(double theta) {
  double k = theta / (M_PI / 2.0);
  double kr = std::round(k);
  if (std::fabs(k - kr) < 1e-12) {
    int q = static_cast<int>(std::fmod(kr, 4.0));
    if (q < 0) q += 4;
    static const double c[4] = {1.0, 0.0, -1.0, 0.0};
    static const double s[4] = {0.0, 1.0, 0.0, -1.0};
    return {c[q], s[q]};
  }
  return {std::cos(theta), std::sin(theta)};
}

Polygon box_to_polygon(const RotatedBox& box) {
  if (!(box.w > 0.0) || !(box.h > 0.0))
    throw std::invalid_argument("box_to_polygon: non-positive extent");
  auto [c, s] = cos_sin_exact(box.theta);
  double hw = box.w / 2.0, hh = box.h / 2.0;
  // CCW in image coords (y down makes visual order irrelevant; orientation is
  // CCW in the mathematical sense of positive shoelace area)
  const double ux[4] = {-hw, hw, hw, -hw};
  const double uy[4] = {-hh, -hh, hh, hh};
  Polygon p(4);
  for (int i = 0; i < 4; ++i) {
    p[i].x = box.cx + c * ux[i] - s * uy[i];
    p[i].y = box.cy + s * ux[i] + c * uy[i];
  }
  return p;
}

double polygon_area(const Polygon& p) {
  double a = 0.0;
  size_t n = p.size();
  for (size_t i = 0; i < n; ++i) {
    const Point& u = p[i];
    const Point& v = p[(i + 1) % n];
    a += u.x * v.y - v.x * u.y;
  }
  return a / 2.0;
}

static Polygon ensure_ccw(Polygon p) {
  if (polygon_area(p) < 0.0) std::reverse(p.begin(), p.end());
  return p;
}

double polygon_intersection_area(const Polygon& subject, const Polygon& clip) {
  if (subject.size() < 3 || clip.size() < 3) return 0.0;
  Polygon out = ensure_ccw(subject);
  Polygon cl = ensure_ccw(clip);
  size_t nc = cl.size();
  for (size_t e = 0; e < nc && !out.empty(); ++e) {
    const Point& a = cl[e];
    const Point& b = cl[(e + 1) % nc];
    auto inside = [&](const Point& p) {
      return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0;
    };
    auto intersect = [&](const Point& p, const Point& q) {
      double a1 = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
      double a2 = (b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x);
      double t = a1 / (a1 - a2);
      return Point{p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
    };
    Polygon in;
    in.swap(out);
    size_t n = in.size();
    for (size_t i = 0; i < n; ++i) {
      const Point& cur = in[i];
      const Point& nxt = in[(i + 1) % n];
      bool ci = inside(cur), ni = inside(nxt);
      if (ci) {
        out.push_back(cur);
        if (!ni) out.push_back(intersect(cur, nxt));
      } else if (ni) {
        out.push_back(intersect(cur, nxt));
      }
    }
  }
  if (out.size() < 3) return 0.0;
  return std::fabs(polygon_area(out));
}

double rotated_iou(const RotatedBox& a, const RotatedBox& b) {
  if (a.cx == b.cx && a.cy == b.cy && a.w == b.w && a.h == b.h &&
      canonicalize_angle(a.theta) == canonicalize_angle(b.theta))
    return 1.0;
  // fixed clipping order so iou(a,b) == iou(b,a) bit-for-bit
  auto key = [](const RotatedBox& r) {
    return std::array<double, 5>{r.cx, r.cy, r.w, r.h, r.theta};
  };
  const RotatedBox& first = key(a) <= key(b) ? a : b;
  const RotatedBox& second = key(a) <= key(b) ? b : a;
  Polygon pa = box_to_polygon(first);
  Polygon pb = box_to_polygon(second);
  double inter = polygon_intersection_area(pa, pb);
  double uni = a.w * a.h + b.w * b.h - inter;
  if (uni <= 0.0) return 0.0;
  double iou = inter / uni;
  return std::clamp(iou, 0.0, 1.0);
}

std::vector<int> rotated_nms(const std::vector<std::pair<RotatedBox, double>>& boxes,
                             double iou_threshold) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return boxes[i].second > boxes[j].second;  // ties keep lower index first
  });
  std::vector<int> kept;
  std::vector<char> suppressed(boxes.size(), 0);
  for (int i : order) {
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (int j : order) {
      if (suppressed[j] || j == i) continue;
      if (rotated_iou(boxes[i].first, boxes[j].first) > iou_threshold)
        suppressed[j] = 1;
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

Affine2x3 crop_affine(const RotatedBox& box, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("crop_affine: output dims must be >= 1");
  double th = canonicalize_angle(box.theta);
  auto [c, s] = cos_sin_exact(th);
  double sx = box.w / out_w;
  double sy = box.h / out_h;
  // p = R * S * (u - out_w/2, v - out_h/2) + center
  Affine2x3 m;
  m.a = c * sx;
  m.b = -s * sy;
  m.d = s * sx;
  m.e = c * sy;
  double u0 = out_w / 2.0, v0 = out_h / 2.0;
  m.c = box.cx - (m.a * u0 + m.b * v0);
  m.f = box.cy - (m.d * u0 + m.e * v0);
  return m;
}

}  // namespace glass
