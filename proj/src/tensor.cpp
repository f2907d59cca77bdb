// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "phaseforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace phaseforge {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorImpl> new_impl(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(size_t(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  return impl;
}

bool track(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->impl()->requires_grad) return true;
  return false;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// C[M,N] += A[M,K] * B[K,N]
void mm_accum(const double* a, const double* b, double* c, int64_t m_dim,
              int64_t k_dim, int64_t n_dim) {
  for (int64_t m = 0; m < m_dim; ++m) {
    const double* arow = a + m * k_dim;
    double* crow = c + m * n_dim;
    for (int64_t k = 0; k < k_dim; ++k) {
      double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b + k * n_dim;
      for (int64_t n = 0; n < n_dim; ++n) crow[n] += av * brow[n];
    }
  }
}

// C[M,K] += G[M,N] * B[K,N]^T  (rows of B dotted against rows of G)
void mm_accum_bt(const double* g, const double* b, double* c, int64_t m_dim,
                 int64_t n_dim, int64_t k_dim) {
  for (int64_t m = 0; m < m_dim; ++m) {
    const double* grow = g + m * n_dim;
    double* crow = c + m * k_dim;
    for (int64_t k = 0; k < k_dim; ++k) {
      const double* brow = b + k * n_dim;
      double acc = 0.0;
      for (int64_t n = 0; n < n_dim; ++n) acc += grow[n] * brow[n];
      crow[k] += acc;
    }
  }
}

// C[K,N] += A[M,K]^T * G[M,N]
void mm_accum_at(const double* a, const double* g, double* c, int64_t m_dim,
                 int64_t k_dim, int64_t n_dim) {
  for (int64_t m = 0; m < m_dim; ++m) {
    const double* arow = a + m * k_dim;
    const double* grow = g + m * n_dim;
    for (int64_t k = 0; k < k_dim; ++k) {
      double av = arow[k];
      if (av == 0.0) continue;
      double* crow = c + k * n_dim;
      for (int64_t n = 0; n < n_dim; ++n) crow[n] += av * grow[n];
    }
  }
}

double principal_atan2(double y, double x) {
  if (y == 0.0 && x == 0.0) return 0.0;
  double p = std::atan2(y, x);
  if (p <= -kPi) p = kPi;  // atan2(-0.0, x<0) returns -pi; fold onto +pi
  return p;
}

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

double* TensorImpl::grad_ptr() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad.data();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = new_impl(std::move(shape));
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  std::fill(t.vec().begin(), t.vec().end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (int64_t(data.size()) != shape_numel(shape))
    throw ShapeError("from: data size does not match " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

const std::vector<double>& Tensor::grad() const {
  static const std::vector<double> empty;
  return impl_->grad.empty() ? empty : impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw StateError("backward: undefined tensor");
  if (loss.numel() != 1)
    throw std::invalid_argument("contract error: backward requires a scalar loss, got " +
                                shape_str(loss.shape()));
  TensorImpl* root = loss.impl().get();
  if (!root->requires_grad)
    throw StateError("backward: loss does not require gradients (no forward graph)");

  // Post-order DFS over the tape.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorImpl* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior (op-result) grads are per-sweep scratch; leaves keep accumulating.
  for (TensorImpl* node : order)
    if (node->backward_fn) std::fill(node->grad.begin(), node->grad.end(), 0.0);

  root->grad_ptr()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

// ---------------------------------------------------------------------------
// op helpers

namespace {

Tensor make_op(Shape shape, std::vector<Tensor> inputs) {
  auto impl = new_impl(std::move(shape));
  bool rec = false;
  if (g_grad_enabled)
    for (auto& t : inputs)
      if (t.impl()->requires_grad) rec = true;
  if (rec) {
    impl->requires_grad = true;
    for (auto& t : inputs) impl->parents.push_back(t.impl());
  }
  return Tensor(impl);
}

// Elementwise unary op with pointwise derivative computed from input value.
template <typename F, typename DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
  int64_t n = a.numel();
  auto out = make_op(a.shape(), {a});
  const double* ad = a.data();
  double* od = out.data();
  for (int64_t i = 0; i < n; ++i) od[i] = f(ad[i]);
  if (out.impl()->requires_grad) {
    auto ai = a.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [ai, oi, n, df]() {
      double* ga = ai->grad_ptr();
      const double* g = oi->grad.data();
      const double* ad2 = ai->data.data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * df(ad2[i]);
    };
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  int64_t n = a.numel();
  auto out = make_op(a.shape(), {a, b});
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (out.impl()->requires_grad) {
    auto ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [ai, bi, oi, n]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* ga = ai->grad_ptr();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bi->requires_grad) {
        double* gb = bi->grad_ptr();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    };
  }
  return out;
}

Tensor add(const Tensor& a, double b) {
  return unary_op(a, [b](double x) { return x + b; }, [](double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  int64_t n = a.numel();
  auto out = make_op(a.shape(), {a, b});
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (out.impl()->requires_grad) {
    auto ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [ai, bi, oi, n]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* ga = ai->grad_ptr();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bi->requires_grad) {
        double* gb = bi->grad_ptr();
        for (int64_t i = 0; i < n; ++i) gb[i] -= g[i];
      }
    };
  }
  return out;
}

Tensor sub(double a, const Tensor& b) {
  return unary_op(b, [a](double x) { return a - x; }, [](double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  int64_t n = a.numel();
  auto out = make_op(a.shape(), {a, b});
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (out.impl()->requires_grad) {
    auto ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [ai, bi, oi, n]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* ga = ai->grad_ptr();
        const double* bd = bi->data.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * bd[i];
      }
      if (bi->requires_grad) {
        double* gb = bi->grad_ptr();
        const double* ad = ai->data.data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * ad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, double b) {
  return unary_op(a, [b](double x) { return x * b; }, [b](double) { return b; });
}

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary_op(a, [](double x) { return std::abs(x); },
                  [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor round_detached(const Tensor& a) {
  return unary_op(a, [](double x) { return std::round(x); }, [](double) { return 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
               x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                  [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

Tensor atan2(const Tensor& y, const Tensor& x) {
  require_same_shape(y, x, "atan2");
  int64_t n = y.numel();
  auto out = make_op(y.shape(), {y, x});
  for (int64_t i = 0; i < n; ++i)
    out.data()[i] = principal_atan2(y.data()[i], x.data()[i]);
  if (out.impl()->requires_grad) {
    auto yi = y.impl(), xi = x.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [yi, xi, oi, n]() {
      const double* g = oi->grad.data();
      const double* yd = yi->data.data();
      const double* xd = xi->data.data();
      double* gy = yi->requires_grad ? yi->grad_ptr() : nullptr;
      double* gx = xi->requires_grad ? xi->grad_ptr() : nullptr;
      for (int64_t i = 0; i < n; ++i) {
        double d = xd[i] * xd[i] + yd[i] * yd[i];
        if (d < 1e-300) continue;
        if (gy) gy[i] += g[i] * xd[i] / d;
        if (gx) gx[i] -= g[i] * yd[i] / d;
      }
    };
  }
  return out;
}

Tensor detach(const Tensor& a) {
  return Tensor::from(a.shape(), a.vec(), false);
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
  auto out = make_op({1}, {a});
  out.data()[0] = acc;
  if (out.impl()->requires_grad) {
    auto ai = a.impl();
    TensorImpl* oi = out.impl().get();
    int64_t n = a.numel();
    oi->backward_fn = [ai, oi, n]() {
      double g = oi->grad[0];
      double* ga = ai->grad_ptr();
      for (int64_t i = 0; i < n; ++i) ga[i] += g;
    };
  }
  return out;
}

Tensor mean(const Tensor& a) { return mul(sum(a), 1.0 / double(a.numel())); }

Tensor l1(const Tensor& a) { return sum(abs(a)); }

Tensor l2_norm(const Tensor& a, int axis) {
  if (a.rank() != 2) throw ShapeError("l2_norm: rank-2 input required");
  if (axis != 0 && axis != 1) throw ShapeError("l2_norm: axis must be 0 or 1");
  int64_t rows = a.dim(0), cols = a.dim(1);
  int64_t out_n = axis == 0 ? cols : rows;
  auto out = make_op({out_n}, {a});
  const double* ad = a.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) {
      double v = ad[r * cols + c];
      out.data()[axis == 0 ? c : r] += v * v;
    }
  for (int64_t i = 0; i < out_n; ++i) out.data()[i] = std::sqrt(out.data()[i]);
  if (out.impl()->requires_grad) {
    auto ai = a.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [ai, oi, rows, cols, axis]() {
      double* ga = ai->grad_ptr();
      const double* ad2 = ai->data.data();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
          int64_t k = axis == 0 ? c : r;
          double nv = oi->data[k];
          if (nv > 0.0) ga[r * cols + c] += oi->grad[k] * ad2[r * cols + c] / nv;
        }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// structural

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (a.rank() != b.rank()) throw ShapeError("concat: rank mismatch");
  if (axis < 0 || axis >= a.rank()) throw ShapeError("concat: bad axis");
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis && a.dim(i) != b.dim(i))
      throw ShapeError("concat: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape os = a.shape();
  os[size_t(axis)] += b.dim(axis);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  int64_t ablk = a.dim(axis) * inner, bblk = b.dim(axis) * inner;
  auto out = make_op(os, {a, b});
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(a.data() + o * ablk, ablk, out.data() + o * (ablk + bblk));
    std::copy_n(b.data() + o * bblk, bblk, out.data() + o * (ablk + bblk) + ablk);
  }
  if (out.impl()->requires_grad) {
    auto ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [ai, bi, oi, outer, ablk, bblk]() {
      const double* g = oi->grad.data();
      for (int64_t o = 0; o < outer; ++o) {
        if (ai->requires_grad) {
          double* ga = ai->grad_ptr();
          for (int64_t i = 0; i < ablk; ++i) ga[o * ablk + i] += g[o * (ablk + bblk) + i];
        }
        if (bi->requires_grad) {
          double* gb = bi->grad_ptr();
          for (int64_t i = 0; i < bblk; ++i)
            gb[o * bblk + i] += g[o * (ablk + bblk) + ablk + i];
        }
      }
    };
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  int64_t n = a.numel();
  auto out = make_op(std::move(shape), {a});
  std::copy_n(a.data(), n, out.data());
  if (out.impl()->requires_grad) {
    auto ai = a.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [ai, oi, n]() {
      double* ga = ai->grad_ptr();
      for (int64_t i = 0; i < n; ++i) ga[i] += oi->grad[i];
    };
  }
  return out;
}

Tensor shift2d(const Tensor& a, int dr, int dc) {
  if (a.rank() != 2) throw ShapeError("shift2d: rank-2 input required");
  int64_t rows = a.dim(0), cols = a.dim(1);
  auto out = make_op(a.shape(), {a});
  for (int64_t r = 0; r < rows; ++r) {
    int64_t sr = r + dr;
    if (sr < 0 || sr >= rows) continue;
    for (int64_t c = 0; c < cols; ++c) {
      int64_t sc = c + dc;
      if (sc < 0 || sc >= cols) continue;
      out.data()[r * cols + c] = a.data()[sr * cols + sc];
    }
  }
  if (out.impl()->requires_grad) {
    auto ai = a.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [ai, oi, rows, cols, dr, dc]() {
      double* ga = ai->grad_ptr();
      const double* g = oi->grad.data();
      for (int64_t r = 0; r < rows; ++r) {
        int64_t sr = r + dr;
        if (sr < 0 || sr >= rows) continue;
        for (int64_t c = 0; c < cols; ++c) {
          int64_t sc = c + dc;
          if (sc < 0 || sc >= cols) continue;
          ga[sr * cols + sc] += g[r * cols + c];
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra / layers

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = make_op({m, n}, {a, b});
  mm_accum(a.data(), b.data(), out.data(), m, k, n);
  if (out.impl()->requires_grad) {
    auto ai = a.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [ai, bi, oi, m, k, n]() {
      const double* g = oi->grad.data();
      if (ai->requires_grad) mm_accum_bt(g, bi->data.data(), ai->grad_ptr(), m, n, k);
      if (bi->requires_grad) mm_accum_at(ai->data.data(), g, bi->grad_ptr(), m, k, n);
    };
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    throw ShapeError("linear: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  int64_t t_dim = x.dim(0), cin = x.dim(1), cout = w.dim(1);
  if (b.rank() != 1 || b.dim(0) != cout) throw ShapeError("linear: bad bias shape");
  auto out = make_op({t_dim, cout}, {x, w, b});
  for (int64_t t = 0; t < t_dim; ++t)
    std::copy_n(b.data(), cout, out.data() + t * cout);
  mm_accum(x.data(), w.data(), out.data(), t_dim, cin, cout);
  if (out.impl()->requires_grad) {
    auto xi = x.impl(), wi = w.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [xi, wi, bi, oi, t_dim, cin, cout]() {
      const double* g = oi->grad.data();
      if (xi->requires_grad) mm_accum_bt(g, wi->data.data(), xi->grad_ptr(), t_dim, cout, cin);
      if (wi->requires_grad) mm_accum_at(xi->data.data(), g, wi->grad_ptr(), t_dim, cin, cout);
      if (bi->requires_grad) {
        double* gb = bi->grad_ptr();
        for (int64_t t = 0; t < t_dim; ++t)
          for (int64_t c = 0; c < cout; ++c) gb[c] += g[t * cout + c];
      }
    };
  }
  return out;
}

namespace {

// Packs conv1d weights [Cout,Cg,K] -> [K*Cg, Cout_g block layout] for one group.
// col layout for conv1d: col[t, k*Cg + ci] = x[t + k - pad, base + ci]
void conv1d_im2col(const double* x, int64_t t_dim, int64_t cin, int64_t base,
                   int64_t cg, int64_t kk, int64_t pad, double* col) {
  int64_t row = kk * cg;
  for (int64_t t = 0; t < t_dim; ++t) {
    double* crow = col + t * row;
    for (int64_t k = 0; k < kk; ++k) {
      int64_t src = t + k - pad;
      double* dst = crow + k * cg;
      if (src < 0 || src >= t_dim) {
        std::fill_n(dst, cg, 0.0);
      } else {
        std::copy_n(x + src * cin + base, cg, dst);
      }
    }
  }
}

void conv1d_col2im(const double* col, int64_t t_dim, int64_t cin, int64_t base,
                   int64_t cg, int64_t kk, int64_t pad, double* gx) {
  int64_t row = kk * cg;
  for (int64_t t = 0; t < t_dim; ++t) {
    const double* crow = col + t * row;
    for (int64_t k = 0; k < kk; ++k) {
      int64_t dst = t + k - pad;
      if (dst < 0 || dst >= t_dim) continue;
      double* out = gx + dst * cin + base;
      const double* src = crow + k * cg;
      for (int64_t c = 0; c < cg; ++c) out[c] += src[c];
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int groups) {
  if (x.rank() != 2 || w.rank() != 3) throw ShapeError("conv1d: expected x rank 2, w rank 3");
  int64_t t_dim = x.dim(0), cin = x.dim(1);
  int64_t cout = w.dim(0), cg = w.dim(1), kk = w.dim(2);
  if (kk % 2 == 0) throw ShapeError("conv1d: kernel must be odd for same padding");
  if (groups < 1 || cin % groups != 0 || cout % groups != 0 || cg != cin / groups)
    throw ShapeError("conv1d: incompatible groups/channels");
  if (b.rank() != 1 || b.dim(0) != cout) throw ShapeError("conv1d: bad bias shape");
  int64_t pad = kk / 2;
  int64_t cout_g = cout / groups;

  auto out = make_op({t_dim, cout}, {x, w, b});
  for (int64_t t = 0; t < t_dim; ++t)
    std::copy_n(b.data(), cout, out.data() + t * cout);

  bool depthwise = (groups == cin && cout == cin);
  if (depthwise) {
    std::vector<double> wk(size_t(cin), 0.0);
    for (int64_t k = 0; k < kk; ++k) {
      for (int64_t c = 0; c < cin; ++c) wk[size_t(c)] = w.data()[c * kk + k];
      for (int64_t t = 0; t < t_dim; ++t) {
        int64_t src = t + k - pad;
        if (src < 0 || src >= t_dim) continue;
        const double* xrow = x.data() + src * cin;
        double* orow = out.data() + t * cin;
        for (int64_t c = 0; c < cin; ++c) orow[c] += wk[size_t(c)] * xrow[c];
      }
    }
  } else {
    std::vector<double> col(size_t(t_dim * kk * cg), 0.0);
    std::vector<double> wpack(size_t(kk * cg * cout_g), 0.0);
    for (int g = 0; g < groups; ++g) {
      conv1d_im2col(x.data(), t_dim, cin, g * cg, cg, kk, pad, col.data());
      for (int64_t co = 0; co < cout_g; ++co)
        for (int64_t ci = 0; ci < cg; ++ci)
          for (int64_t k = 0; k < kk; ++k)
            wpack[size_t((k * cg + ci) * cout_g + co)] =
                w.data()[((g * cout_g + co) * cg + ci) * kk + k];
      // accumulate into the group's output columns
      std::vector<double> oblk(size_t(t_dim * cout_g), 0.0);
      mm_accum(col.data(), wpack.data(), oblk.data(), t_dim, kk * cg, cout_g);
      for (int64_t t = 0; t < t_dim; ++t)
        for (int64_t co = 0; co < cout_g; ++co)
          out.data()[t * cout + g * cout_g + co] += oblk[size_t(t * cout_g + co)];
    }
  }

  if (out.impl()->requires_grad) {
    auto xi = x.impl(), wi = w.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [xi, wi, bi, oi, t_dim, cin, cout, cg, kk, pad, groups,
                       cout_g, depthwise]() {
      const double* g = oi->grad.data();
      if (bi->requires_grad) {
        double* gb = bi->grad_ptr();
        for (int64_t t = 0; t < t_dim; ++t)
          for (int64_t c = 0; c < cout; ++c) gb[c] += g[t * cout + c];
      }
      if (depthwise) {
        const double* xd = xi->data.data();
        const double* wd = wi->data.data();
        for (int64_t k = 0; k < kk; ++k) {
          for (int64_t t = 0; t < t_dim; ++t) {
            int64_t src = t + k - pad;
            if (src < 0 || src >= t_dim) continue;
            const double* grow = g + t * cin;
            if (wi->requires_grad) {
              double* gw = wi->grad_ptr();
              const double* xrow = xd + src * cin;
              for (int64_t c = 0; c < cin; ++c) gw[c * kk + k] += grow[c] * xrow[c];
            }
            if (xi->requires_grad) {
              double* gx = xi->grad_ptr() + src * cin;
              for (int64_t c = 0; c < cin; ++c) gx[c] += grow[c] * wd[c * kk + k];
            }
          }
        }
        return;
      }
      std::vector<double> col(size_t(t_dim * kk * cg), 0.0);
      std::vector<double> wpack(size_t(kk * cg * cout_g), 0.0);
      std::vector<double> gblk(size_t(t_dim * cout_g), 0.0);
      for (int gi = 0; gi < groups; ++gi) {
        conv1d_im2col(xi->data.data(), t_dim, cin, gi * cg, cg, kk, pad, col.data());
        for (int64_t t = 0; t < t_dim; ++t)
          for (int64_t co = 0; co < cout_g; ++co)
            gblk[size_t(t * cout_g + co)] = g[t * cout + gi * cout_g + co];
        if (wi->requires_grad) {
          std::vector<double> gwpack(size_t(kk * cg * cout_g), 0.0);
          mm_accum_at(col.data(), gblk.data(), gwpack.data(), t_dim, kk * cg, cout_g);
          double* gw = wi->grad_ptr();
          for (int64_t co = 0; co < cout_g; ++co)
            for (int64_t ci = 0; ci < cg; ++ci)
              for (int64_t k = 0; k < kk; ++k)
                gw[((gi * cout_g + co) * cg + ci) * kk + k] +=
                    gwpack[size_t((k * cg + ci) * cout_g + co)];
        }
        if (xi->requires_grad) {
          for (int64_t co = 0; co < cout_g; ++co)
            for (int64_t ci = 0; ci < cg; ++ci)
              for (int64_t k = 0; k < kk; ++k)
                wpack[size_t((k * cg + ci) * cout_g + co)] =
                    wi->data[((gi * cout_g + co) * cg + ci) * kk + k];
          std::vector<double> gcol(size_t(t_dim * kk * cg), 0.0);
          mm_accum_bt(gblk.data(), wpack.data(), gcol.data(), t_dim, cout_g, kk * cg);
          conv1d_col2im(gcol.data(), t_dim, cin, gi * cg, cg, kk, pad, xi->grad_ptr());
        }
      }
    };
  }
  return out;
}

namespace {

// col layout for conv2d: col[(ci*KH+kh)*KW+kw, oh*OW+ow]
void conv2d_im2col(const double* x, int64_t cin, int64_t h, int64_t w,
                   int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph,
                   int64_t pw, int64_t oh, int64_t ow, double* col) {
  for (int64_t ci = 0; ci < cin; ++ci)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        double* crow = col + ((ci * kh + ki) * kw + kj) * (oh * ow);
        for (int64_t i = 0; i < oh; ++i) {
          int64_t ih = i * sh - ph + ki;
          double* dst = crow + i * ow;
          if (ih < 0 || ih >= h) {
            std::fill_n(dst, ow, 0.0);
            continue;
          }
          const double* xrow = x + (ci * h + ih) * w;
          for (int64_t j = 0; j < ow; ++j) {
            int64_t iw = j * sw - pw + kj;
            dst[j] = (iw < 0 || iw >= w) ? 0.0 : xrow[iw];
          }
        }
      }
}

void conv2d_col2im(const double* col, int64_t cin, int64_t h, int64_t w,
                   int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph,
                   int64_t pw, int64_t oh, int64_t ow, double* gx) {
  for (int64_t ci = 0; ci < cin; ++ci)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        const double* crow = col + ((ci * kh + ki) * kw + kj) * (oh * ow);
        for (int64_t i = 0; i < oh; ++i) {
          int64_t ih = i * sh - ph + ki;
          if (ih < 0 || ih >= h) continue;
          double* xrow = gx + (ci * h + ih) * w;
          for (int64_t j = 0; j < ow; ++j) {
            int64_t iw = j * sw - pw + kj;
            if (iw >= 0 && iw < w) xrow[iw] += crow[i * ow + j];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h,
              int stride_w, int pad_h, int pad_w) {
  if (x.rank() != 3 || w.rank() != 4) throw ShapeError("conv2d: expected x rank 3, w rank 4");
  int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin) throw ShapeError("conv2d: channel mismatch");
  if (b.rank() != 1 || b.dim(0) != cout) throw ShapeError("conv2d: bad bias shape");
  int64_t oh = (h + 2 * pad_h - kh) / stride_h + 1;
  int64_t ow = (wd + 2 * pad_w - kw) / stride_w + 1;
  if (oh < 1 || ow < 1) throw ShapeError("conv2d: output dims not positive");
  int64_t kk = cin * kh * kw, o_n = oh * ow;

  std::vector<double> col(size_t(kk * o_n), 0.0);
  conv2d_im2col(x.data(), cin, h, wd, kh, kw, stride_h, stride_w, pad_h, pad_w,
                oh, ow, col.data());
  std::vector<double> wpack(size_t(kk * cout), 0.0);
  for (int64_t co = 0; co < cout; ++co)
    for (int64_t k = 0; k < kk; ++k) wpack[size_t(k * cout + co)] = w.data()[co * kk + k];

  // out_cl[o, co] = sum_k col[k, o] * wpack[k, co]
  std::vector<double> out_cl(size_t(o_n * cout), 0.0);
  for (int64_t k = 0; k < kk; ++k) {
    const double* crow = col.data() + k * o_n;
    const double* wrow = wpack.data() + k * cout;
    for (int64_t o = 0; o < o_n; ++o) {
      double cv = crow[o];
      if (cv == 0.0) continue;
      double* orow = out_cl.data() + o * cout;
      for (int64_t co = 0; co < cout; ++co) orow[co] += cv * wrow[co];
    }
  }

  auto out = make_op({cout, oh, ow}, {x, w, b});
  for (int64_t co = 0; co < cout; ++co) {
    double bv = b.data()[co];
    for (int64_t o = 0; o < o_n; ++o) out.data()[co * o_n + o] = out_cl[size_t(o * cout + co)] + bv;
  }

  if (out.impl()->requires_grad) {
    auto xi = x.impl(), wi = w.impl(), bi = b.impl();
    TensorImpl* oi = out.impl().get();
    auto col_keep = std::make_shared<std::vector<double>>(std::move(col));
    auto wpack_keep = std::make_shared<std::vector<double>>(std::move(wpack));
    int64_t sh = stride_h, sw = stride_w, ph = pad_h, pw = pad_w;
    oi->backward_fn = [xi, wi, bi, oi, col_keep, wpack_keep, cin, h, wd, kh, kw,
                       sh, sw, ph, pw, oh, ow, cout, kk, o_n]() {
      // grad in channels-last layout
      std::vector<double> g_cl(size_t(o_n * cout), 0.0);
      for (int64_t co = 0; co < cout; ++co)
        for (int64_t o = 0; o < o_n; ++o)
          g_cl[size_t(o * cout + co)] = oi->grad[co * o_n + o];
      if (bi->requires_grad) {
        double* gb = bi->grad_ptr();
        for (int64_t co = 0; co < cout; ++co)
          for (int64_t o = 0; o < o_n; ++o) gb[co] += oi->grad[co * o_n + o];
      }
      if (wi->requires_grad) {
        std::vector<double> gwpack(size_t(kk * cout), 0.0);
        const double* col_d = col_keep->data();
        for (int64_t k = 0; k < kk; ++k) {
          const double* crow = col_d + k * o_n;
          double* gwrow = gwpack.data() + k * cout;
          for (int64_t o = 0; o < o_n; ++o) {
            double cv = crow[o];
            if (cv == 0.0) continue;
            const double* grow = g_cl.data() + o * cout;
            for (int64_t co = 0; co < cout; ++co) gwrow[co] += cv * grow[co];
          }
        }
        double* gw = wi->grad_ptr();
        for (int64_t co = 0; co < cout; ++co)
          for (int64_t k = 0; k < kk; ++k) gw[co * kk + k] += gwpack[size_t(k * cout + co)];
      }
      if (xi->requires_grad) {
        std::vector<double> gcol(size_t(kk * o_n), 0.0);
        const double* wp = wpack_keep->data();
        for (int64_t k = 0; k < kk; ++k) {
          double* grow = gcol.data() + k * o_n;
          const double* wrow = wp + k * cout;
          for (int64_t o = 0; o < o_n; ++o) {
            const double* gl = g_cl.data() + o * cout;
            double acc = 0.0;
            for (int64_t co = 0; co < cout; ++co) acc += gl[co] * wrow[co];
            grow[o] += acc;
          }
        }
        conv2d_col2im(gcol.data(), cin, h, wd, kh, kw, sh, sw, ph, pw, oh, ow,
                      xi->grad_ptr());
      }
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() != 2) throw ShapeError("layer_norm: rank-2 input required");
  int64_t t_dim = x.dim(0), c = x.dim(1);
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
    throw ShapeError("layer_norm: affine params must be [C]");
  auto out = make_op({t_dim, c}, {x, gamma, beta});
  auto xhat = std::make_shared<std::vector<double>>(size_t(t_dim * c));
  auto inv_std = std::make_shared<std::vector<double>>(size_t(t_dim));
  for (int64_t t = 0; t < t_dim; ++t) {
    const double* xr = x.data() + t * c;
    double mu = 0.0;
    for (int64_t i = 0; i < c; ++i) mu += xr[i];
    mu /= double(c);
    double var = 0.0;
    for (int64_t i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= double(c);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[size_t(t)] = is;
    double* xh = xhat->data() + t * c;
    double* orow = out.data() + t * c;
    for (int64_t i = 0; i < c; ++i) {
      xh[i] = (xr[i] - mu) * is;
      orow[i] = gamma.data()[i] * xh[i] + beta.data()[i];
    }
  }
  if (out.impl()->requires_grad) {
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [xi, gi, bi, oi, xhat, inv_std, t_dim, c]() {
      for (int64_t t = 0; t < t_dim; ++t) {
        const double* g = oi->grad.data() + t * c;
        const double* xh = xhat->data() + t * c;
        if (gi->requires_grad) {
          double* gg = gi->grad_ptr();
          for (int64_t i = 0; i < c; ++i) gg[i] += g[i] * xh[i];
        }
        if (bi->requires_grad) {
          double* gb = bi->grad_ptr();
          for (int64_t i = 0; i < c; ++i) gb[i] += g[i];
        }
        if (xi->requires_grad) {
          double mean_h = 0.0, mean_hx = 0.0;
          const double* gd = gi->data.data();
          for (int64_t i = 0; i < c; ++i) {
            double hv = g[i] * gd[i];
            mean_h += hv;
            mean_hx += hv * xh[i];
          }
          mean_h /= double(c);
          mean_hx /= double(c);
          double is = (*inv_std)[size_t(t)];
          double* gx = xi->grad_ptr() + t * c;
          for (int64_t i = 0; i < c; ++i)
            gx[i] += (g[i] * gd[i] - mean_h - xh[i] * mean_hx) * is;
        }
      }
    };
  }
  return out;
}

Tensor grn(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() != 2) throw ShapeError("grn: rank-2 input required");
  int64_t t_dim = x.dim(0), c = x.dim(1);
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
    throw ShapeError("grn: affine params must be [C]");
  auto gnorm = std::make_shared<std::vector<double>>(size_t(c), 0.0);
  for (int64_t t = 0; t < t_dim; ++t) {
    const double* xr = x.data() + t * c;
    for (int64_t i = 0; i < c; ++i) (*gnorm)[size_t(i)] += xr[i] * xr[i];
  }
  double m = 0.0;
  for (int64_t i = 0; i < c; ++i) {
    (*gnorm)[size_t(i)] = std::sqrt((*gnorm)[size_t(i)]);
    m += (*gnorm)[size_t(i)];
  }
  m /= double(c);
  double denom = m + eps;
  auto out = make_op({t_dim, c}, {x, gamma, beta});
  for (int64_t t = 0; t < t_dim; ++t) {
    const double* xr = x.data() + t * c;
    double* orow = out.data() + t * c;
    for (int64_t i = 0; i < c; ++i) {
      double n = (*gnorm)[size_t(i)] / denom;
      orow[i] = gamma.data()[i] * (xr[i] * n) + beta.data()[i] + xr[i];
    }
  }
  if (out.impl()->requires_grad) {
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    TensorImpl* oi = out.impl().get();
    oi->backward_fn = [xi, gi, bi, oi, gnorm, denom, t_dim, c]() {
      const double* xd = xi->data.data();
      const double* gd = gi->data.data();
      // P_c = sum_t gy[t,c] * x[t,c]
      std::vector<double> p(size_t(c), 0.0), gy_sum(size_t(c), 0.0);
      for (int64_t t = 0; t < t_dim; ++t) {
        const double* g = oi->grad.data() + t * c;
        const double* xr = xd + t * c;
        for (int64_t i = 0; i < c; ++i) {
          p[size_t(i)] += g[i] * xr[i];
          gy_sum[size_t(i)] += g[i];
        }
      }
      if (bi->requires_grad) {
        double* gb = bi->grad_ptr();
        for (int64_t i = 0; i < c; ++i) gb[i] += gy_sum[size_t(i)];
      }
      if (gi->requires_grad) {
        double* gg = gi->grad_ptr();
        for (int64_t i = 0; i < c; ++i)
          gg[i] += p[size_t(i)] * (*gnorm)[size_t(i)] / denom;
      }
      if (xi->requires_grad) {
        double q = 0.0;
        for (int64_t i = 0; i < c; ++i) q += gd[i] * p[size_t(i)] * (*gnorm)[size_t(i)];
        double* gx = xi->grad_ptr();
        for (int64_t t = 0; t < t_dim; ++t) {
          const double* g = oi->grad.data() + t * c;
          const double* xr = xd + t * c;
          double* gxr = gx + t * c;
          for (int64_t i = 0; i < c; ++i) {
            double gn = (*gnorm)[size_t(i)];
            double n = gn / denom;
            gxr[i] += g[i] * (gd[i] * n + 1.0);
            if (gn > 1e-300) {
              double s = gd[i] * p[size_t(i)];
              gxr[i] += (xr[i] / gn) * (s * denom - q / double(c)) / (denom * denom);
            }
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// optimizer

void zero_grad(std::vector<Param>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

void adamw_step(double* p, const double* g, double* m, double* v, int64_t n,
                int64_t t, double lr, double beta1, double beta2, double eps,
                double weight_decay) {
  double bc1 = 1.0 - std::pow(beta1, double(t));
  double bc2 = 1.0 - std::pow(beta2, double(t));
  for (int64_t i = 0; i < n; ++i) {
    p[i] -= lr * weight_decay * p[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

AdamW::AdamW(double b1, double b2, double e, double wd)
    : beta1(b1), beta2(b2), eps(e), weight_decay(wd) {}

void AdamW::step(std::vector<Param>& params, double lr) {
  if (m_.size() != params.size()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(size_t(params[i].tensor.numel()), 0.0);
      v_[i].assign(size_t(params[i].tensor.numel()), 0.0);
    }
  }
  ++t_;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    adamw_step(t.data(), t.impl()->grad_ptr(), m_[i].data(), v_[i].data(),
               t.numel(), t_, lr, beta1, beta2, eps, weight_decay);
  }
}

}  // namespace phaseforge
