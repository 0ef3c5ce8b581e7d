#include "glass/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace glass {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

static std::shared_ptr<TensorImpl> make_impl(const Shape& shape,
                                             std::vector<double> data,
                                             bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  if (static_cast<int64_t>(impl->data.size()) != shape_numel(shape))
    throw std::invalid_argument("tensor data length does not match shape " +
                                shape_str(shape));
  return impl;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(make_impl(shape, std::vector<double>(shape_numel(shape), 0.0),
                          requires_grad));
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(make_impl(shape, std::vector<double>(shape_numel(shape), value),
                          requires_grad));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data,
                         bool requires_grad) {
  return Tensor(make_impl(shape, std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev,
                     bool requires_grad) {
  std::vector<double> d(shape_numel(shape));
  for (auto& v : d) v = rng.normal(0.0, stddev);
  return from_data(shape, std::move(d), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(impl_->data.size()); }
std::vector<double>& Tensor::data() { return impl_->data; }
const std::vector<double>& Tensor::data() const { return impl_->data; }
bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool v) { impl_->requires_grad = v; }
std::vector<double>& Tensor::grad() { return impl_->grad_buf(); }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor");
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = impl_->shape;
  if (idx.size() != s.size()) throw std::invalid_argument("at(): rank mismatch");
  int64_t flat = 0;
  auto it = idx.begin();
  for (size_t d = 0; d < s.size(); ++d, ++it) flat = flat * s[d] + *it;
  return impl_->data[flat];
}

// ---- graph --------------------------------------------------------------

static bool any_requires(const std::vector<Tensor>& parents) {
  for (const auto& p : parents)
    if (p.defined() && p.requires_grad()) return true;
  return false;
}

static Tensor make_node(const Shape& shape, std::vector<double> data,
                        const std::vector<Tensor>& parents,
                        std::function<void(TensorImpl&)> backward_fn) {
  auto impl = make_impl(shape, std::move(data), false);
  if (any_requires(parents)) {
    impl->requires_grad = true;
    for (const auto& p : parents)
      if (p.defined()) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(impl);
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward() requires a scalar loss");
  TensorImpl* root = loss.node();
  if (!root->requires_grad) return;

  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  // iterative post-order
  std::vector<std::pair<TensorImpl*, size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p->backward_fn && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (TensorImpl* n : order)
    if (n->consumed)
      throw std::logic_error("backward() called twice on a consumed graph");

  root->grad_buf().assign(root->data.size(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
    n->consumed = true;
  }
  // free the tape; leaves keep their grads
  for (TensorImpl* n : order) {
    n->parents.clear();
    n->backward_fn = nullptr;
  }
}

// ---- broadcasting -------------------------------------------------------

namespace {

struct Broadcast {
  Shape out;
  std::vector<int64_t> stride_a, stride_b;  // per out dim; 0 where broadcast

  int64_t map_a(int64_t flat, const std::vector<int64_t>& out_stride) const {
    return map(flat, out_stride, stride_a);
  }
  int64_t map_b(int64_t flat, const std::vector<int64_t>& out_stride) const {
    return map(flat, out_stride, stride_b);
  }
  static int64_t map(int64_t flat, const std::vector<int64_t>& out_stride,
                     const std::vector<int64_t>& in_stride) {
    int64_t r = 0;
    for (size_t d = 0; d < out_stride.size(); ++d) {
      int64_t idx = flat / out_stride[d];
      flat -= idx * out_stride[d];
      r += idx * in_stride[d];
    }
    return r;
  }
};

std::vector<int64_t> contiguous_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int d = static_cast<int>(s.size()) - 1; d >= 0; --d) {
    st[d] = acc;
    acc *= s[d];
  }
  return st;
}

Broadcast broadcast_shapes(const Shape& a, const Shape& b) {
  size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
  Broadcast bc;
  bc.out.resize(rank);
  for (size_t d = 0; d < rank; ++d) {
    if (pa[d] == pb[d]) bc.out[d] = pa[d];
    else if (pa[d] == 1) bc.out[d] = pb[d];
    else if (pb[d] == 1) bc.out[d] = pa[d];
    else
      throw std::invalid_argument("incompatible shapes " + shape_str(a) +
                                  " and " + shape_str(b));
  }
  auto sa = contiguous_strides(pa);
  auto sb = contiguous_strides(pb);
  bc.stride_a.resize(rank);
  bc.stride_b.resize(rank);
  for (size_t d = 0; d < rank; ++d) {
    bc.stride_a[d] = pa[d] == 1 && bc.out[d] != 1 ? 0 : sa[d];
    bc.stride_b[d] = pb[d] == 1 && bc.out[d] != 1 ? 0 : sb[d];
  }
  return bc;
}

}  // namespace

template <typename Fwd, typename BwdA, typename BwdB>
static Tensor binary_broadcast_op(const Tensor& a, const Tensor& b, Fwd fwd,
                                  BwdA dfa, BwdB dfb) {
  Broadcast bc = broadcast_shapes(a.shape(), b.shape());
  auto out_stride = contiguous_strides(bc.out);
  int64_t n = shape_numel(bc.out);
  std::vector<double> out(n);
  const auto& da = a.data();
  const auto& db = b.data();
  for (int64_t i = 0; i < n; ++i)
    out[i] = fwd(da[bc.map_a(i, out_stride)], db[bc.map_b(i, out_stride)]);
  auto ai = a.impl();
  auto bi = b.impl();
  return make_node(bc.out, std::move(out), {a, b},
                   [bc, out_stride, ai, bi, dfa, dfb](TensorImpl& self) {
                     const auto& g = self.grad;
                     const auto& da = ai->data;
                     const auto& db = bi->data;
                     bool need_a = ai->requires_grad, need_b = bi->requires_grad;
                     auto* ga = need_a ? &ai->grad_buf() : nullptr;
                     auto* gb = need_b ? &bi->grad_buf() : nullptr;
                     for (int64_t i = 0; i < static_cast<int64_t>(g.size()); ++i) {
                       int64_t ia = bc.map_a(i, out_stride);
                       int64_t ib = bc.map_b(i, out_stride);
                       if (need_a) (*ga)[ia] += g[i] * dfa(da[ia], db[ib]);
                       if (need_b) (*gb)[ib] += g[i] * dfb(da[ia], db[ib]);
                     }
                   });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_broadcast_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_broadcast_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_broadcast_op(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (auto& v : out) v *= c;
  auto ai = a.impl();
  return make_node(a.shape(), std::move(out), {a}, [ai, c](TensorImpl& self) {
    auto& ga = ai->grad_buf();
    for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += c * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (auto& v : out) v += c;
  auto ai = a.impl();
  return make_node(a.shape(), std::move(out), {a}, [ai](TensorImpl& self) {
    auto& ga = ai->grad_buf();
    for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

// ---- matmul -------------------------------------------------------------

static void gemm(const double* a, const double* b, double* c, int m, int k,
                 int n, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<int64_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* ar = a + static_cast<int64_t>(i) * k;
    double* cr = c + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = ar[p];
      if (av == 0.0) continue;
      const double* br = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// c += a^T b with a (k,m), b (k,n)
static void gemm_tn(const double* a, const double* b, double* c, int m, int k,
                    int n) {
  for (int p = 0; p < k; ++p) {
    const double* ar = a + static_cast<int64_t>(p) * m;
    const double* br = b + static_cast<int64_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      double av = ar[i];
      if (av == 0.0) continue;
      double* cr = c + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// c += a b^T with a (m,k), b (n,k)
static void gemm_nt(const double* a, const double* b, double* c, int m, int k,
                    int n) {
  for (int i = 0; i < m; ++i) {
    const double* ar = a + static_cast<int64_t>(i) * k;
    double* cr = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* br = b + static_cast<int64_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
      cr[j] += acc;
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul shape mismatch " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(static_cast<int64_t>(m) * n);
  gemm(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  auto ai = a.impl();
  auto bi = b.impl();
  return make_node({m, n}, std::move(out), {a, b},
                   [ai, bi, m, k, n](TensorImpl& self) {
                     if (ai->requires_grad)
                       gemm_nt(self.grad.data(), bi->data.data(),
                               ai->grad_buf().data(), m, n, k);
                     if (bi->requires_grad)
                       gemm_tn(ai->data.data(), self.grad.data(),
                               bi->grad_buf().data(), k, m, n);
                   });
}

// ---- pointwise ----------------------------------------------------------

template <typename Fwd, typename Bwd>
static Tensor unary_op(const Tensor& x, Fwd fwd, Bwd dfdx) {
  std::vector<double> out(x.numel());
  const auto& d = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(d[i]);
  auto xi = x.impl();
  return make_node(x.shape(), std::move(out), {x}, [xi, dfdx](TensorImpl& self) {
    auto& gx = xi->grad_buf();
    for (size_t i = 0; i < self.grad.size(); ++i)
      gx[i] += self.grad[i] * dfdx(xi->data[i], self.data[i]);
  });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op(x, [](double v) { return std::tanh(v); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor sin_op(const Tensor& x) {
  return unary_op(x, [](double v) { return std::sin(v); },
                  [](double v, double) { return std::cos(v); });
}

Tensor abs_op(const Tensor& x) {
  return unary_op(x, [](double v) { return std::fabs(v); },
                  [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// ---- softmax ------------------------------------------------------------

namespace {

// Decomposes flat indices into (group, member) where members range over the
// reduction axes and groups over everything else.
struct AxisGrouping {
  int64_t n_groups = 1, group_size = 1;
  std::vector<int64_t> group_of, member_of;  // per flat index

  AxisGrouping(const Shape& shape, const std::set<int>& axes) {
    for (size_t d = 0; d < shape.size(); ++d)
      (axes.count(static_cast<int>(d)) ? group_size : n_groups) *= shape[d];
    int64_t n = shape_numel(shape);
    group_of.resize(n);
    member_of.resize(n);
    auto strides = contiguous_strides(shape);
    for (int64_t i = 0; i < n; ++i) {
      int64_t g = 0, m = 0, rest = i;
      for (size_t d = 0; d < shape.size(); ++d) {
        int64_t idx = rest / strides[d];
        rest -= idx * strides[d];
        if (axes.count(static_cast<int>(d)))
          m = m * shape[d] + idx;
        else
          g = g * shape[d] + idx;
      }
      group_of[i] = g;
      member_of[i] = m;
    }
  }
};

}  // namespace

Tensor softmax(const Tensor& x, const std::set<int>& axes) {
  if (axes.empty()) throw std::invalid_argument("softmax: empty axis set");
  for (int a : axes)
    if (a < 0 || a >= static_cast<int>(x.shape().size()))
      throw std::invalid_argument("softmax: axis out of range");
  auto grouping = std::make_shared<AxisGrouping>(x.shape(), axes);
  int64_t n = x.numel();
  const auto& d = x.data();
  std::vector<double> mx(grouping->n_groups, -1e308);
  for (int64_t i = 0; i < n; ++i)
    mx[grouping->group_of[i]] = std::max(mx[grouping->group_of[i]], d[i]);
  std::vector<double> out(n), denom(grouping->n_groups, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    out[i] = std::exp(d[i] - mx[grouping->group_of[i]]);
    denom[grouping->group_of[i]] += out[i];
  }
  for (int64_t i = 0; i < n; ++i) out[i] /= denom[grouping->group_of[i]];
  auto xi = x.impl();
  return make_node(x.shape(), std::move(out), {x},
                   [xi, grouping](TensorImpl& self) {
                     std::vector<double> dot(grouping->n_groups, 0.0);
                     const auto& g = self.grad;
                     const auto& y = self.data;
                     for (size_t i = 0; i < g.size(); ++i)
                       dot[grouping->group_of[i]] += g[i] * y[i];
                     auto& gx = xi->grad_buf();
                     for (size_t i = 0; i < g.size(); ++i)
                       gx[i] += y[i] * (g[i] - dot[grouping->group_of[i]]);
                   });
}

// ---- shape ops ----------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: element count mismatch " +
                                shape_str(x.shape()) + " -> " + shape_str(shape));
  auto xi = x.impl();
  return make_node(shape, x.data(), {x}, [xi](TensorImpl& self) {
    auto& gx = xi->grad_buf();
    for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor vec(const Tensor& x) { return reshape(x, {static_cast<int>(x.numel())}); }

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size()))
    throw std::invalid_argument("concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size())
      throw std::invalid_argument("concat: rank mismatch");
    for (size_t d = 0; d < s.size(); ++d)
      if (static_cast<int>(d) != axis && s[d] != s0[d])
        throw std::invalid_argument("concat: shape mismatch " + shape_str(s) +
                                    " vs " + shape_str(s0));
    out_shape[axis] += s[axis];
  }
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  std::vector<double> out(shape_numel(out_shape));
  int64_t axis_total = out_shape[axis];
  int64_t offset = 0;
  for (const auto& p : parts) {
    int64_t ax = p.shape()[axis];
    const auto& d = p.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(d.begin() + o * ax * inner, d.begin() + (o + 1) * ax * inner,
                out.begin() + (o * axis_total + offset) * inner);
    offset += ax;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<int64_t> axes_sizes;
  for (const auto& p : parts) {
    impls.push_back(p.impl());
    axes_sizes.push_back(p.shape()[axis]);
  }
  return make_node(out_shape, std::move(out), parts,
                   [impls, axes_sizes, outer, inner, axis_total](TensorImpl& self) {
                     int64_t offset = 0;
                     for (size_t pi = 0; pi < impls.size(); ++pi) {
                       int64_t ax = axes_sizes[pi];
                       if (impls[pi]->requires_grad) {
                         auto& g = impls[pi]->grad_buf();
                         for (int64_t o = 0; o < outer; ++o)
                           for (int64_t j = 0; j < ax * inner; ++j)
                             g[o * ax * inner + j] +=
                                 self.grad[(o * axis_total + offset) * inner + j];
                       }
                       offset += ax;
                     }
                   });
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()) || start < 0 || len < 1 ||
      start + len > s[axis])
    throw std::invalid_argument("slice: bad range");
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  const auto& d = x.data();
  int64_t ax = s[axis];
  for (int64_t o = 0; o < outer; ++o)
    std::copy(d.begin() + (o * ax + start) * inner,
              d.begin() + (o * ax + start + len) * inner,
              out.begin() + o * len * inner);
  auto xi = x.impl();
  return make_node(out_shape, std::move(out), {x},
                   [xi, outer, inner, ax, start, len](TensorImpl& self) {
                     auto& g = xi->grad_buf();
                     for (int64_t o = 0; o < outer; ++o)
                       for (int64_t j = 0; j < len * inner; ++j)
                         g[(o * ax + start) * inner + j] +=
                             self.grad[o * len * inner + j];
                   });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto xi = x.impl();
  return make_node({1}, {s}, {x}, [xi](TensorImpl& self) {
    auto& g = xi->grad_buf();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// ---- lookup & losses ----------------------------------------------------

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2)
    throw std::invalid_argument("embedding: table must be 2-D");
  int v = table.shape()[0], dim = table.shape()[1];
  for (int id : ids)
    if (id < 0 || id >= v) throw std::invalid_argument("embedding: id out of range");
  std::vector<double> out(ids.size() * dim);
  const auto& d = table.data();
  for (size_t t = 0; t < ids.size(); ++t)
    std::copy(d.begin() + static_cast<int64_t>(ids[t]) * dim,
              d.begin() + static_cast<int64_t>(ids[t] + 1) * dim,
              out.begin() + t * dim);
  auto ti = table.impl();
  return make_node({static_cast<int>(ids.size()), dim}, std::move(out), {table},
                   [ti, ids, dim](TensorImpl& self) {
                     auto& g = ti->grad_buf();
                     for (size_t t = 0; t < ids.size(); ++t)
                       for (int j = 0; j < dim; ++j)
                         g[static_cast<int64_t>(ids[t]) * dim + j] +=
                             self.grad[t * dim + j];
                   });
}

Tensor nll_loss(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.shape().size() != 2)
    throw std::invalid_argument("nll_loss: logits must be (T,V)");
  int t_max = logits.shape()[0], v = logits.shape()[1];
  int n = static_cast<int>(targets.size());
  if (n < 1 || n > t_max)
    throw std::invalid_argument("nll_loss: target length out of range");
  for (int s : targets)
    if (s < 0 || s >= v)
      throw std::invalid_argument("nll_loss: out-of-vocab symbol");
  const auto& d = logits.data();
  // stable log-softmax per used row
  std::vector<double> probs(static_cast<int64_t>(n) * v);
  double loss = 0.0;
  for (int t = 0; t < n; ++t) {
    const double* row = d.data() + static_cast<int64_t>(t) * v;
    double mx = *std::max_element(row, row + v);
    double denom = 0.0;
    for (int j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
    double log_denom = std::log(denom);
    loss -= (row[targets[t]] - mx - log_denom);
    for (int j = 0; j < v; ++j)
      probs[static_cast<int64_t>(t) * v + j] = std::exp(row[j] - mx) / denom;
  }
  loss /= n;
  auto li = logits.impl();
  return make_node({1}, {loss}, {logits},
                   [li, probs = std::move(probs), targets, v, n](TensorImpl& self) {
                     auto& g = li->grad_buf();
                     double go = self.grad[0] / n;
                     for (int t = 0; t < n; ++t)
                       for (int j = 0; j < v; ++j)
                         g[static_cast<int64_t>(t) * v + j] +=
                             go * (probs[static_cast<int64_t>(t) * v + j] -
                                   (j == targets[t] ? 1.0 : 0.0));
                   });
}

Tensor bce_with_logits_mean(const Tensor& logits,
                            const std::vector<double>& targets) {
  if (logits.numel() != static_cast<int64_t>(targets.size()))
    throw std::invalid_argument("bce: size mismatch");
  const auto& d = logits.data();
  double loss = 0.0;
  for (size_t i = 0; i < targets.size(); ++i) {
    double x = d[i], y = targets[i];
    loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
  }
  int64_t n = logits.numel();
  loss /= static_cast<double>(n);
  auto li = logits.impl();
  return make_node({1}, {loss}, {logits}, [li, targets, n](TensorImpl& self) {
    auto& g = li->grad_buf();
    double go = self.grad[0] / static_cast<double>(n);
    for (size_t i = 0; i < targets.size(); ++i) {
      double x = li->data[i];
      double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                          : std::exp(x) / (1.0 + std::exp(x));
      g[i] += go * (s - targets[i]);
    }
  });
}

// ---- conv2d -------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv2dOpts& o) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (is.size() != 3 || ws.size() != 4 || is[0] != ws[1])
    throw std::invalid_argument("conv2d shape mismatch: input " + shape_str(is) +
                                " weight " + shape_str(ws));
  int cin = is[0], h = is[1], w = is[2];
  int cout = ws[0], kh = ws[2], kw = ws[3];
  if (kh < 1 || kw < 1 || o.pad_h < 0 || o.pad_w < 0)
    throw std::invalid_argument("conv2d: bad kernel/padding");
  int num_h = h + 2 * o.pad_h - kh, num_w = w + 2 * o.pad_w - kw;
  if (num_h < 0 || num_w < 0 || num_h % o.stride_h || num_w % o.stride_w)
    throw std::invalid_argument("conv2d: non-integral output size for input " +
                                shape_str(is));
  int oh = num_h / o.stride_h + 1, ow = num_w / o.stride_w + 1;

  int64_t patch = static_cast<int64_t>(cin) * kh * kw;
  int64_t cols = static_cast<int64_t>(oh) * ow;
  auto col = std::make_shared<std::vector<double>>(patch * cols, 0.0);
  const auto& id = input.data();
  {
    double* cp = col->data();
    for (int c = 0; c < cin; ++c)
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj) {
          double* row = cp + ((static_cast<int64_t>(c) * kh + ki) * kw + kj) * cols;
          for (int i = 0; i < oh; ++i) {
            int yi = i * o.stride_h + ki - o.pad_h;
            if (yi < 0 || yi >= h) continue;
            const double* src = id.data() + (static_cast<int64_t>(c) * h + yi) * w;
            for (int j = 0; j < ow; ++j) {
              int xj = j * o.stride_w + kj - o.pad_w;
              if (xj >= 0 && xj < w) row[static_cast<int64_t>(i) * ow + j] = src[xj];
            }
          }
        }
  }
  std::vector<double> out(static_cast<int64_t>(cout) * cols);
  gemm(weight.data().data(), col->data(), out.data(), cout,
       static_cast<int>(patch), static_cast<int>(cols), false);
  if (bias.defined()) {
    if (bias.numel() != cout) throw std::invalid_argument("conv2d: bias size");
    for (int c = 0; c < cout; ++c)
      for (int64_t j = 0; j < cols; ++j) out[c * cols + j] += bias.data()[c];
  }

  auto ii = input.impl();
  auto wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  std::vector<Tensor> parents = {input, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_node(
      {cout, oh, ow}, std::move(out), parents,
      [ii, wi, bi, col, o, cin, h, w, cout, kh, kw, oh, ow, patch,
       cols](TensorImpl& self) {
        if (wi->requires_grad)
          gemm_nt(self.grad.data(), col->data(), wi->grad_buf().data(), cout,
                  static_cast<int>(cols), static_cast<int>(patch));
        if (bi && bi->requires_grad) {
          auto& gb = bi->grad_buf();
          for (int c = 0; c < cout; ++c)
            for (int64_t j = 0; j < cols; ++j) gb[c] += self.grad[c * cols + j];
        }
        if (ii->requires_grad) {
          std::vector<double> dcol(patch * cols, 0.0);
          gemm_tn(wi->data.data(), self.grad.data(), dcol.data(),
                  static_cast<int>(patch), cout, static_cast<int>(cols));
          auto& gi = ii->grad_buf();
          const double* cp = dcol.data();
          for (int c = 0; c < cin; ++c)
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj) {
                const double* row =
                    cp + ((static_cast<int64_t>(c) * kh + ki) * kw + kj) * cols;
                for (int i = 0; i < oh; ++i) {
                  int yi = i * o.stride_h + ki - o.pad_h;
                  if (yi < 0 || yi >= h) continue;
                  double* dst =
                      gi.data() + (static_cast<int64_t>(c) * h + yi) * w;
                  for (int j = 0; j < ow; ++j) {
                    int xj = j * o.stride_w + kj - o.pad_w;
                    if (xj >= 0 && xj < w)
                      dst[xj] += row[static_cast<int64_t>(i) * ow + j];
                  }
                }
              }
        }
      });
}

// ---- batchnorm ----------------------------------------------------------

BatchNormParams BatchNormParams::make(int channels) {
  BatchNormParams p;
  p.gamma = Tensor::full({channels}, 1.0, true);
  p.beta = Tensor::zeros({channels}, true);
  p.running_mean = Tensor::zeros({channels});
  p.running_var = Tensor::full({channels}, 1.0);
  return p;
}

Tensor batchnorm(const Tensor& x, BatchNormParams& params, int channel_axis,
                 bool training) {
  const Shape& s = x.shape();
  if (channel_axis < 0 || channel_axis >= static_cast<int>(s.size()))
    throw std::invalid_argument("batchnorm: channel axis out of range");
  int c = s[channel_axis];
  if (params.gamma.numel() != c)
    throw std::invalid_argument("batchnorm: channel count mismatch");
  int64_t n = x.numel();
  int64_t per_channel = n / c;
  if (training && per_channel < 2)
    throw std::invalid_argument(
        "batchnorm: train mode needs >1 value per channel");

  auto strides = contiguous_strides(s);
  int64_t cs = strides[channel_axis];
  auto channel_of = [c, cs](int64_t i) { return (i / cs) % c; };

  const auto& d = x.data();
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    for (int64_t i = 0; i < n; ++i) mean[channel_of(i)] += d[i];
    for (auto& m : mean) m /= static_cast<double>(per_channel);
    for (int64_t i = 0; i < n; ++i) {
      double dv = d[i] - mean[channel_of(i)];
      var[channel_of(i)] += dv * dv;
    }
    for (auto& v : var) v /= static_cast<double>(per_channel);
    auto& rm = params.running_mean.data();
    auto& rv = params.running_var.data();
    for (int j = 0; j < c; ++j) {
      rm[j] = params.momentum * rm[j] + (1.0 - params.momentum) * mean[j];
      rv[j] = params.momentum * rv[j] + (1.0 - params.momentum) * var[j];
    }
  } else {
    mean = params.running_mean.data();
    var = params.running_var.data();
  }
  std::vector<double> inv_std(c);
  for (int j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + params.eps);

  const auto& gam = params.gamma.data();
  const auto& bet = params.beta.data();
  std::vector<double> out(n), xhat(n);
  for (int64_t i = 0; i < n; ++i) {
    int64_t ch = channel_of(i);
    xhat[i] = (d[i] - mean[ch]) * inv_std[ch];
    out[i] = gam[ch] * xhat[i] + bet[ch];
  }

  auto xi = x.impl();
  auto gi = params.gamma.impl();
  auto bi = params.beta.impl();
  return make_node(
      s, std::move(out), {x, params.gamma, params.beta},
      [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std),
       channel_of, c, per_channel, training](TensorImpl& self) {
        const auto& g = self.grad;
        int64_t n = static_cast<int64_t>(g.size());
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (int64_t i = 0; i < n; ++i) {
          int64_t ch = channel_of(i);
          sum_g[ch] += g[i];
          sum_gx[ch] += g[i] * xhat[i];
        }
        if (gi->requires_grad) {
          auto& gg = gi->grad_buf();
          for (int j = 0; j < c; ++j) gg[j] += sum_gx[j];
        }
        if (bi->requires_grad) {
          auto& gb = bi->grad_buf();
          for (int j = 0; j < c; ++j) gb[j] += sum_g[j];
        }
        if (xi->requires_grad) {
          auto& gx = xi->grad_buf();
          const auto& gam = gi->data;
          double inv_n = 1.0 / static_cast<double>(per_channel);
          for (int64_t i = 0; i < n; ++i) {
            int64_t ch = channel_of(i);
            double gy = g[i] * gam[ch];
            if (training)
              gx[i] += inv_std[ch] *
                       (gy - inv_n * gam[ch] * sum_g[ch] -
                        xhat[i] * inv_n * gam[ch] * sum_gx[ch]);
            else
              gx[i] += inv_std[ch] * gy;
          }
        }
      });
}

// ---- bilinear sampling --------------------------------------------------

Tensor bilinear_sample(const Tensor& features, const std::vector<double>& xs,
                       const std::vector<double>& ys, int out_h, int out_w) {
  const Shape& s = features.shape();
  if (s.size() != 3) throw std::invalid_argument("bilinear_sample: need (C,H,W)");
  if (static_cast<int64_t>(xs.size()) != static_cast<int64_t>(out_h) * out_w ||
      xs.size() != ys.size())
    throw std::invalid_argument("bilinear_sample: point count mismatch");
  int c = s[0], h = s[1], w = s[2];
  int64_t np = xs.size();
  // 4 neighbor (index, weight) pairs per point; index -1 marks out of bounds
  struct Tap { int64_t idx; double wt; };
  auto taps = std::make_shared<std::vector<Tap>>(np * 4);
  for (int64_t p = 0; p < np; ++p) {
    double x = xs[p], y = ys[p];
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    const int xi_[2] = {x0, x0 + 1};
    const int yi_[2] = {y0, y0 + 1};
    const double wx[2] = {1.0 - fx, fx};
    const double wy[2] = {1.0 - fy, fy};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        Tap& t = (*taps)[p * 4 + a * 2 + b];
        bool in = yi_[a] >= 0 && yi_[a] < h && xi_[b] >= 0 && xi_[b] < w;
        t.idx = in ? static_cast<int64_t>(yi_[a]) * w + xi_[b] : -1;
        t.wt = wy[a] * wx[b];
      }
  }
  std::vector<double> out(static_cast<int64_t>(c) * np, 0.0);
  const auto& d = features.data();
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = d.data() + static_cast<int64_t>(ch) * h * w;
    double* op = out.data() + static_cast<int64_t>(ch) * np;
    for (int64_t p = 0; p < np; ++p) {
      double acc = 0.0;
      for (int t = 0; t < 4; ++t) {
        const Tap& tp = (*taps)[p * 4 + t];
        if (tp.idx >= 0) acc += tp.wt * plane[tp.idx];
      }
      op[p] = acc;
    }
  }
  auto fi = features.impl();
  int64_t hw = static_cast<int64_t>(h) * w;
  return make_node({c, out_h, out_w}, std::move(out), {features},
                   [fi, taps, c, np, hw](TensorImpl& self) {
                     auto& g = fi->grad_buf();
                     for (int ch = 0; ch < c; ++ch) {
                       double* plane = g.data() + ch * hw;
                       const double* gp = self.grad.data() + ch * np;
                       for (int64_t p = 0; p < np; ++p)
                         for (int t = 0; t < 4; ++t) {
                           const Tap& tp = (*taps)[p * 4 + t];
                           if (tp.idx >= 0) plane[tp.idx] += tp.wt * gp[p];
                         }
                     }
                   });
}

// ---- interleave ---------------------------------------------------------

Tensor channel_interleave(const Tensor& g, const Tensor& l) {
  if (g.shape() != l.shape() || g.shape().size() != 3)
    throw std::invalid_argument("channel_interleave: shapes must match, got " +
                                shape_str(g.shape()) + " vs " +
                                shape_str(l.shape()));
  int c = g.shape()[0], h = g.shape()[1], w = g.shape()[2];
  int64_t hw = static_cast<int64_t>(h) * w;
  std::vector<double> out(2 * c * hw);
  for (int j = 0; j < c; ++j) {
    std::copy(g.data().begin() + j * hw, g.data().begin() + (j + 1) * hw,
              out.begin() + (2 * j) * hw);
    std::copy(l.data().begin() + j * hw, l.data().begin() + (j + 1) * hw,
              out.begin() + (2 * j + 1) * hw);
  }
  auto gi = g.impl();
  auto li = l.impl();
  return make_node({2 * c, h, w}, std::move(out), {g, l},
                   [gi, li, c, hw](TensorImpl& self) {
                     for (int j = 0; j < c; ++j) {
                       if (gi->requires_grad) {
                         auto& gg = gi->grad_buf();
                         for (int64_t p = 0; p < hw; ++p)
                           gg[j * hw + p] += self.grad[(2 * j) * hw + p];
                       }
                       if (li->requires_grad) {
                         auto& gl = li->grad_buf();
                         for (int64_t p = 0; p < hw; ++p)
                           gl[j * hw + p] += self.grad[(2 * j + 1) * hw + p];
                       }
                     }
                   });
}

std::pair<Tensor, Tensor> channel_deinterleave(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] % 2)
    throw std::invalid_argument("channel_deinterleave: need even channels");
  int c = s[0] / 2, h = s[1], w = s[2];
  int64_t hw = static_cast<int64_t>(h) * w;
  std::vector<double> go(c * hw), lo(c * hw);
  for (int j = 0; j < c; ++j) {
    std::copy(x.data().begin() + (2 * j) * hw, x.data().begin() + (2 * j + 1) * hw,
              go.begin() + j * hw);
    std::copy(x.data().begin() + (2 * j + 1) * hw,
              x.data().begin() + (2 * j + 2) * hw, lo.begin() + j * hw);
  }
  auto xi = x.impl();
  Tensor g = make_node({c, h, w}, std::move(go), {x}, [xi, c, hw](TensorImpl& self) {
    auto& gx = xi->grad_buf();
    for (int j = 0; j < c; ++j)
      for (int64_t p = 0; p < hw; ++p)
        gx[(2 * j) * hw + p] += self.grad[j * hw + p];
  });
  Tensor l = make_node({c, h, w}, std::move(lo), {x}, [xi, c, hw](TensorImpl& self) {
    auto& gx = xi->grad_buf();
    for (int j = 0; j < c; ++j)
      for (int64_t p = 0; p < hw; ++p)
        gx[(2 * j + 1) * hw + p] += self.grad[j * hw + p];
  });
  return {g, l};
}

// ---- gradcheck ----------------------------------------------------------

double finite_diff_gradcheck(const std::function<Tensor(const Tensor&)>& f,
                             Tensor point, double h) {
  Tensor p = Tensor::from_data(point.shape(), point.data(), true);
  Tensor loss = f(p);
  backward(loss);
  std::vector<double> analytic = p.grad();

  double max_rel = 0.0;
  for (int64_t i = 0; i < p.numel(); ++i) {
    Tensor q = Tensor::from_data(point.shape(), point.data(), false);
    q.data()[i] += h;
    double fp = f(q).item();
    q.data()[i] = point.data()[i] - h;
    double fm = f(q).item();
    double cd = (fp - fm) / (2.0 * h);
    double rel = std::fabs(analytic[i] - cd) / std::max(1.0, std::fabs(cd));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace glass
