// Copyright 2026 PhaseForge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "phaseforge/common.hpp"

namespace phaseforge {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // allocated on first use, same size as data
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void()> backward_fn;  // pushes this->grad into parents

  double* grad_ptr();  // allocates zeros if missing
};

/// Dense double-precision tensor with an optional reverse-mode tape.
/// Handle semantics: copies share storage. Graphs are built eagerly by the
/// free-function ops below whenever gradients are enabled and some input
/// requires them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t rank() const { return int64_t(impl_->shape.size()); }
  int64_t numel() const { return int64_t(impl_->data.size()); }
  int64_t dim(int i) const { return impl_->shape[size_t(i)]; }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& vec() { return impl_->data; }
  const std::vector<double>& vec() const { return impl_->data; }

  /// Value of a scalar (1-element) tensor.
  double item() const;

  // Rank-2 convenience accessors (row r, column c).
  double& at(int64_t r, int64_t c) { return impl_->data[size_t(r * dim(1) + c)]; }
  double at(int64_t r, int64_t c) const { return impl_->data[size_t(r * dim(1) + c)]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode sweep from a scalar loss. Accumulates into the .grad of every
/// reachable tensor that requires gradients; repeated calls keep accumulating.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph construction in a scope (frozen models, metric evaluation).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
/// round() treated as a constant in the backward pass (zero gradient).
Tensor round_detached(const Tensor& a);
Tensor atan2(const Tensor& y, const Tensor& x);
Tensor gelu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor relu(const Tensor& a);
/// Copy that blocks gradient flow.
Tensor detach(const Tensor& a);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sum of absolute values.
Tensor l1(const Tensor& a);
/// Per-column L2 norm of a rank-2 tensor (reduces axis 0).
Tensor l2_norm(const Tensor& a, int axis);

// ---- structural ----
Tensor concat(const Tensor& a, const Tensor& b, int axis);
/// Same data, new shape (element count must match).
Tensor reshape(const Tensor& a, Shape shape);
/// Rank-2 shift with zero fill: out[r][c] = a[r+dr][c+dc] where in range.
Tensor shift2d(const Tensor& a, int dr, int dc);

// ---- linear algebra / neural layers ----
Tensor matmul(const Tensor& a, const Tensor& b);
/// x:[T,Cin] w:[Cin,Cout] b:[Cout] -> [T,Cout]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// x:[T,Cin] w:[Cout,Cin/groups,K] b:[Cout] -> [T,Cout]; stride 1, zero
/// "same" padding, odd K.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int groups = 1);
/// x:[Cin,H,W] w:[Cout,Cin,KH,KW] b:[Cout]; explicit stride and zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int stride_h, int stride_w, int pad_h, int pad_w);
/// Normalizes the last axis of a rank-2 input; affine gamma/beta of size [C].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
/// Global response normalization over the time axis of x:[T,C]:
/// g_c = ||x[:,c]||_2, n_c = g_c / (mean_c g + eps), out = gamma*(x*n) + beta + x.
Tensor grn(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// ---- parameters / optimizer ----
struct Param {
  std::string name;
  Tensor tensor;  // requires_grad = true
};

void zero_grad(std::vector<Param>& params);

/// Decoupled-weight-decay Adam with bias correction. Weight decay is applied
/// before the adaptive step.
class AdamW {
 public:
  AdamW(double beta1 = 0.8, double beta2 = 0.99, double eps = 1e-8,
        double weight_decay = 0.01);

  void step(std::vector<Param>& params, double lr);

  int64_t step_count() const { return t_; }

  // Serialization hooks (moments are keyed per parameter, in order).
  std::vector<std::vector<double>>& moments_m() { return m_; }
  std::vector<std::vector<double>>& moments_v() { return v_; }
  const std::vector<std::vector<double>>& moments_m() const { return m_; }
  const std::vector<std::vector<double>>& moments_v() const { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

  double beta1, beta2, eps, weight_decay;

 private:
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

/// One AdamW update on raw buffers; exposed for direct use and testing.
void adamw_step(double* p, const double* g, double* m, double* v, int64_t n,
                int64_t t, double lr, double beta1, double beta2, double eps,
                double weight_decay);

}  // namespace phaseforge
