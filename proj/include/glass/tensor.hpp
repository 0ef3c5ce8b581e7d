#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "glass/rng.hpp"

namespace glass {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl;

// Dense 64-bit float tensor with reverse-mode autodiff. Value-semantics handle
// over a shared node; graphs are built dynamically per forward pass and freed
// after backward().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(const Shape& shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  std::vector<double>& data();
  const std::vector<double>& data() const;
  bool requires_grad() const;
  void set_requires_grad(bool v);

  // Gradient buffer; sized on demand, zero-initialized.
  std::vector<double>& grad();
  bool has_grad() const;
  void zero_grad();

  double item() const;                      // scalar tensors only
  double at(std::initializer_list<int> idx) const;

  TensorImpl* node() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until touched
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Accumulates into parents' grads given this node's grad.
  std::function<void(TensorImpl&)> backward_fn;
  bool consumed = false;

  std::vector<double>& grad_buf() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

// Runs reverse-mode accumulation from a scalar loss. The graph is consumed:
// a second backward through any of its interior nodes is a state error.
void backward(const Tensor& loss);

// ---- op catalogue -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);       // broadcasting
Tensor sub(const Tensor& a, const Tensor& b);       // broadcasting
Tensor mul(const Tensor& a, const Tensor& b);       // broadcasting
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);    // (M,K)x(K,N)

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor sin_op(const Tensor& x);
Tensor abs_op(const Tensor& x);                     // subgradient 0 at the kink

Tensor softmax(const Tensor& x, const std::set<int>& axes);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor vec(const Tensor& x);                        // flatten to (numel)
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Rows of `table` (V,D) selected by ids -> (T,D).
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

// Mean over the first `count` rows of -log softmax(row)[target].
Tensor nll_loss(const Tensor& logits, const std::vector<int>& targets);

// Mean binary cross-entropy with logits against a constant target in [0,1].
Tensor bce_with_logits_mean(const Tensor& logits, const std::vector<double>& targets);

struct Conv2dOpts {
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;
};
// input (Cin,H,W), weight (Cout,Cin,kh,kw), optional bias (Cout).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv2dOpts& opts);

struct BatchNormParams {
  Tensor gamma, beta;                 // learnable
  Tensor running_mean, running_var;   // eval-mode statistics, not learnable
  double momentum = 0.9;
  double eps = 1e-5;

  static BatchNormParams make(int channels);
};
// Normalizes over every axis except `channel_axis`. Train mode uses batch
// statistics and updates running stats; eval mode uses running stats.
Tensor batchnorm(const Tensor& x, BatchNormParams& params, int channel_axis,
                 bool training);

// Bilinear read of feature map (C,H,W) at continuous cell coords (xs[i], ys[i]),
// out-of-bounds reads 0. Differentiable wrt the feature map only.
Tensor bilinear_sample(const Tensor& features, const std::vector<double>& xs,
                       const std::vector<double>& ys, int out_h, int out_w);

// Channel interleave of two (C,H,W) maps: output channels g0,l0,g1,l1,...
Tensor channel_interleave(const Tensor& g, const Tensor& l);
// Inverse permutation: (2C,H,W) -> pair of (C,H,W).
std::pair<Tensor, Tensor> channel_deinterleave(const Tensor& x);

// ---- verification -------------------------------------------------------

// Max over coordinates of |analytic - central difference| / max(1, |cd|).
double finite_diff_gradcheck(const std::function<Tensor(const Tensor&)>& f,
                             Tensor point, double h = 1e-5);

}  // namespace glass
