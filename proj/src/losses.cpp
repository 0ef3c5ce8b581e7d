#include "glass/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace glass {

void LossWeights::validate() const {
  for (double a : alpha)
    if (!(a >= 0.0) || !std::isfinite(a))
      throw std::invalid_argument("loss weights must be finite and nonnegative");
  if (!(alpha_theta >= 0.0) || !(lambda1 >= 0.0) || !(lambda2 >= 0.0) ||
      !std::isfinite(alpha_theta) || !std::isfinite(lambda1) ||
      !std::isfinite(lambda2))
    throw std::invalid_argument("loss weights must be finite and nonnegative");
}

static void check_rbox_inputs(const Tensor& pred, const Tensor& target) {
  if (pred.numel() != 5 || target.numel() != 5)
    throw std::invalid_argument("rbox loss expects 5-vectors");
  for (double v : pred.data())
    if (!std::isfinite(v)) throw std::invalid_argument("rbox loss: non-finite pred");
  for (double v : target.data())
    if (!std::isfinite(v)) throw std::invalid_argument("rbox loss: non-finite target");
}

static Tensor weighted_coord_l1(const Tensor& diff5, const LossWeights& w) {
  Tensor coords = slice(diff5, 0, 0, 4);
  Tensor alphas =
      Tensor::from_data({4}, {w.alpha[0], w.alpha[1], w.alpha[2], w.alpha[3]});
  return sum_all(mul(abs_op(coords), alphas));
}

Tensor rbox_loss_sin2(const Tensor& pred, const Tensor& target,
                      const LossWeights& w) {
  check_rbox_inputs(pred, target);
  Tensor diff = sub(reshape(pred, {5}), reshape(target, {5}));
  Tensor coord_term = weighted_coord_l1(diff, w);
  Tensor s = sin_op(slice(diff, 0, 4, 1));
  Tensor angle_term = scale(sum_all(mul(s, s)), w.alpha_theta);
  return add(coord_term, angle_term);
}

Tensor rbox_loss_l1(const Tensor& pred, const Tensor& target,
                    const LossWeights& w) {
  check_rbox_inputs(pred, target);
  Tensor diff = sub(reshape(pred, {5}), reshape(target, {5}));
  Tensor coord_term = weighted_coord_l1(diff, w);
  // shift the raw difference into (-pi/2, pi/2]; the shift is locally constant
  // so the gradient is the plain L1 subgradient
  double d = pred.data()[4] - target.data()[4];
  double shift = M_PI * std::ceil(d / M_PI - 0.5);
  Tensor angle = add_scalar(slice(diff, 0, 4, 1), -shift);
  Tensor angle_term = scale(sum_all(abs_op(angle)), w.alpha_theta);
  return add(coord_term, angle_term);
}

Tensor mask_loss(const Tensor& pred_logits, const std::vector<double>& gt_mask) {
  if (pred_logits.numel() != static_cast<int64_t>(gt_mask.size()))
    throw std::invalid_argument("mask_loss: shape mismatch");
  return bce_with_logits_mean(pred_logits, gt_mask);
}

Tensor recognition_nll(const Tensor& char_logits, const std::vector<int>& targets) {
  return nll_loss(char_logits, targets);
}

LossBreakdown total_loss(double rbox, double mask, double rec, double objectness,
                         const LossWeights& w) {
  w.validate();
  if (!std::isfinite(rbox) || !std::isfinite(mask) || !std::isfinite(rec) ||
      !std::isfinite(objectness))
    throw std::invalid_argument("total_loss: non-finite part");
  LossBreakdown b;
  b.rbox = rbox;
  b.mask = mask;
  b.rec = rec;
  b.objectness = objectness;
  b.total = rbox + w.lambda1 * mask + w.lambda2 * rec + objectness;
  return b;
}

Tensor total_loss_tensor(const Tensor& rbox, const Tensor& mask,
                         const Tensor& rec, const Tensor& objectness,
                         const LossWeights& w) {
  w.validate();
  Tensor t = add(rbox, scale(mask, w.lambda1));
  t = add(t, scale(rec, w.lambda2));
  return add(t, objectness);
}

}  // namespace glass
