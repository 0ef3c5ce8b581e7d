#pragma once

#include <vector>

#include "glass/geometry.hpp"
#include "glass/tensor.hpp"

namespace glass {

struct PyramidLevel {
  int stride = 1;       // image pixels per feature cell
  Tensor features;      // (C,H,W)
};

struct FeaturePyramid {
  std::vector<PyramidLevel> levels;  // strides strictly increasing
};

// Pyramid level for a box by scale: clamp(floor(log2(sqrt(w*h)/base)), 0, L-1).
int assign_pyramid_level(const RotatedBox& box, const FeaturePyramid& pyramid,
                         double base_size = 32.0);

// Samples a rotated out_h x out_w grid of cell centers from the level picked
// by box scale. Bilinear over the 4 neighboring cells, out-of-bounds reads 0.
// Differentiable wrt the feature maps.
Tensor rotated_roi_align(const FeaturePyramid& pyramid, const RotatedBox& box,
                         int out_h, int out_w, double base_size = 32.0);

// Bilinear crop of a raw image (3,H,W) under crop_affine; no gradients.
Tensor crop_align_image(const Tensor& image, const RotatedBox& box, int out_h,
                        int out_w);

}  // namespace glass
