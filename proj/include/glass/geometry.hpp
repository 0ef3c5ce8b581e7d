#pragma once

#include <array>
#include <utility>
#include <vector>

namespace glass {

struct Point {
  double x = 0.0, y = 0.0;
};

// Oriented rectangle: center, extent along the reading direction (w), extent
// perpendicular to it (h), and the reading-direction angle theta in radians,
// counter-clockwise from +x, in (-pi, pi].
struct RotatedBox {
  double cx = 0.0, cy = 0.0;
  double w = 1.0, h = 1.0;
  double theta = 0.0;
};

using Polygon = std::vector<Point>;

// Reduces theta modulo pi into [-pi/2, pi/2); the box shape is invariant
// under this symmetry. Throws on non-finite input.
double canonicalize_angle(double theta);

// Wraps any finite angle into (-pi, pi].
double wrap_angle_pi(double theta);

// cos/sin with exact values at multiples of pi/2, so quarter-turn geometry
// stays bit-exact.
std::pair<double, double> cos_sin_exact(double theta);

// 4 CCW corners; first corner is (-w/2, -h/2) in box coordinates.
Polygon box_to_polygon(const RotatedBox& box);

double polygon_area(const Polygon& p);  // signed shoelace, CCW positive

// Sutherland-Hodgman: area of a (simple) subject clipped by a convex polygon.
double polygon_intersection_area(const Polygon& subject, const Polygon& clip);

double rotated_iou(const RotatedBox& a, const RotatedBox& b);

std::vector<int> rotated_nms(const std::vector<std::pair<RotatedBox, double>>& boxes,
                             double iou_threshold);

// 2x3 affine mapping continuous output coords (u,v) in [0,out_w]x[0,out_h]
// to image points inside the box; output corners land on box corners.
struct Affine2x3 {
  // x = a*u + b*v + c;  y = d*u + e*v + f
  double a, b, c, d, e, f;
  Point apply(double u, double v) const {
    return {a * u + b * v + c, d * u + e * v + f};
  }
};

Affine2x3 crop_affine(const RotatedBox& box, int out_h, int out_w);

}  // namespace glass
