#pragma once

#include <array>

#include "glass/tensor.hpp"

namespace glass {

struct LossWeights {
  std::array<double, 4> alpha = {10.0, 10.0, 5.0, 5.0};  // cx, cy, w, h terms
  double alpha_theta = 10.0;
  double lambda1 = 0.005;  // mask
  double lambda2 = 2.0;    // recognition

  void validate() const;
};

struct LossBreakdown {
  double rbox = 0.0, mask = 0.0, rec = 0.0, objectness = 0.0, total = 0.0;
};

// Rotated-box regression on anchor-normalized 5-vectors (dx,dy,dlogw,dlogh,dtheta):
// sum_i alpha_i |p_i - t_i| + alpha_theta * sin^2(p_theta - t_theta).
// Exactly pi-periodic in the angle difference and differentiable in theta.
Tensor rbox_loss_sin2(const Tensor& pred, const Tensor& target,
                      const LossWeights& w);

// Baseline: angle term alpha_theta * |canonicalized(p_theta - t_theta)|.
// Not pi-periodic in the raw difference.
Tensor rbox_loss_l1(const Tensor& pred, const Tensor& target,
                    const LossWeights& w);

// Mean BCE-with-logits over a predicted mask grid against a binary target.
Tensor mask_loss(const Tensor& pred_logits, const std::vector<double>& gt_mask);

// Teacher-forced mean NLL over target symbols (EOS step included).
Tensor recognition_nll(const Tensor& char_logits, const std::vector<int>& targets);

LossBreakdown total_loss(double rbox, double mask, double rec, double objectness,
                         const LossWeights& w);

Tensor total_loss_tensor(const Tensor& rbox, const Tensor& mask,
                         const Tensor& rec, const Tensor& objectness,
                         const LossWeights& w);

}  // namespace glass
