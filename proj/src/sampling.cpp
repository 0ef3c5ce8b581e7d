#include "glass/sampling.hpp"

#include <cmath>
#include <stdexcept>

namespace glass {

int assign_pyramid_level(const RotatedBox& box, const FeaturePyramid& pyramid,
                         double base_size) {
  if (pyramid.levels.empty())
    throw std::invalid_argument("assign_pyramid_level: empty pyramid");
  int l_max = static_cast<int>(pyramid.levels.size()) - 1;
  double scale = std::sqrt(box.w * box.h);
  int level = static_cast<int>(std::floor(std::log2(scale / base_size)));
  return std::max(0, std::min(level, l_max));
}

static void grid_points(const RotatedBox& box, int out_h, int out_w,
                        double coord_scale, double half_cell_offset,
                        std::vector<double>& xs, std::vector<double>& ys) {
  Affine2x3 m = crop_affine(box, out_h, out_w);
  xs.resize(static_cast<size_t>(out_h) * out_w);
  ys.resize(xs.size());
  for (int v = 0; v < out_h; ++v)
    for (int u = 0; u < out_w; ++u) {
      Point p = m.apply(u + 0.5, v + 0.5);
      size_t i = static_cast<size_t>(v) * out_w + u;
      // image point -> continuous cell index (cell centers at k+0.5 units)
      xs[i] = p.x * coord_scale - half_cell_offset;
      ys[i] = p.y * coord_scale - half_cell_offset;
    }
}

Tensor rotated_roi_align(const FeaturePyramid& pyramid, const RotatedBox& box,
                         int out_h, int out_w, double base_size) {
  if (pyramid.levels.empty())
    throw std::invalid_argument("rotated_roi_align: empty pyramid");
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("rotated_roi_align: output dims must be >= 1");
  int level = assign_pyramid_level(box, pyramid, base_size);
  const PyramidLevel& lv = pyramid.levels[level];
  std::vector<double> xs, ys;
  grid_points(box, out_h, out_w, 1.0 / lv.stride, 0.5, xs, ys);
  return bilinear_sample(lv.features, xs, ys, out_h, out_w);
}

Tensor crop_align_image(const Tensor& image, const RotatedBox& box, int out_h,
                        int out_w) {
  if (image.shape().size() != 3)
    throw std::invalid_argument("crop_align_image: image must be (C,H,W)");
  std::vector<double> xs, ys;
  grid_points(box, out_h, out_w, 1.0, 0.5, xs, ys);
  Tensor img = Tensor::from_data(image.shape(), image.data());  // detach
  return bilinear_sample(img, xs, ys, out_h, out_w);
}

}  // namespace glass
