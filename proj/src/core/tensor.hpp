// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a graph node holding a value buffer, an
// optional gradient buffer and a backward closure. Operations record the
// graph eagerly; Tensor::backward() runs reverse-mode accumulation from a
// scalar loss. Instantiated for float and double; training uses float,
// gradient checking uses double.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "core/common.hpp"
#include "core/rng.hpp"

namespace aid {

namespace detail {

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // lazily allocated, shape-congruent with value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // accumulates self.grad into parents

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
  }
};

}  // namespace detail

template <typename Real>
class Tensor {
 public:
  using NodeT = detail::Node<Real>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real v);
  static Tensor scalar(Real v) { return full({1}, v); }
  static Tensor from_data(Shape shape, std::vector<Real> data, bool requires_grad = false);
  static Tensor uniform(Shape shape, Real lo, Real hi, Rng& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return node_->size(); }

  std::span<const Real> data() const { return {node_->value.data(), node_->value.size()}; }
  // Direct mutation; meant for leaf tensors (parameters, optimizer updates).
  std::span<Real> raw_data() const { return {node_->value.data(), node_->value.size()}; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return {node_->grad.data(), node_->grad.size()}; }
  std::span<Real> raw_grad() const {
    node_->ensure_grad();
    return {node_->grad.data(), node_->grad.size()};
  }
  void zero_grad() const {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
  }

  Real item() const {
    AID_CHECK(size() == 1, "item: tensor is not a scalar");
    return node_->value[0];
  }

  // Reverse-mode accumulation from a scalar loss. When
  // release_intermediate_grads is set, gradients of non-leaf nodes are freed
  // as soon as they have been propagated (leaf gradients are always kept).
  void backward(bool release_intermediate_grads = false) const;

  const std::shared_ptr<NodeT>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<NodeT> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<NodeT> node_;
};

// ---- structural ----
template <typename Real> Tensor<Real> reshape(const Tensor<Real>& x, Shape s);
template <typename Real> Tensor<Real> concat(const std::vector<Tensor<Real>>& xs, int axis);
template <typename Real> Tensor<Real> slice(const Tensor<Real>& x, int axis, int64_t start, int64_t len);

// ---- elementwise ----
template <typename Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> add_scalar(const Tensor<Real>& a, Real s);
template <typename Real> Tensor<Real> mul_scalar(const Tensor<Real>& a, Real s);
// x of shape [..., n] plus a bias vector [n] broadcast over leading dims.
template <typename Real> Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& bias);

template <typename Real> Tensor<Real> relu(const Tensor<Real>& x);
template <typename Real> Tensor<Real> sigmoid(const Tensor<Real>& x);
template <typename Real> Tensor<Real> tanh_op(const Tensor<Real>& x);
template <typename Real> Tensor<Real> exp_op(const Tensor<Real>& x);
// x+1 for x >= 0, exp(x) for x < 0; strictly positive, derivative 1 at 0.
template <typename Real> Tensor<Real> elu_plus_one(const Tensor<Real>& x);
// max(x,0)+1 ablation variant of the attention activation.
template <typename Real> Tensor<Real> relu_plus_one(const Tensor<Real>& x);

// Inverted dropout: scales kept entries by 1/(1-p). The mask is drawn from
// the given stream and recorded for backward. p must be in [0,1).
template <typename Real> Tensor<Real> dropout(const Tensor<Real>& x, Real p, Rng& rng);

// ---- reductions / row ops (over the last axis) ----
template <typename Real> Tensor<Real> sum_all(const Tensor<Real>& x);
// Numerically stabilized softmax over the last axis. Rejects non-finite input.
template <typename Real> Tensor<Real> softmax_lastdim(const Tensor<Real>& x);
// Layer normalization over the last axis, no learned affine.
template <typename Real> Tensor<Real> layer_norm(const Tensor<Real>& x, Real eps);
// Layer normalization with learned gamma/beta of shape [n].
template <typename Real> Tensor<Real> layer_norm_affine(const Tensor<Real>& x, const Tensor<Real>& gamma,
                                                        const Tensor<Real>& beta, Real eps);

// ---- linear algebra ----
template <typename Real> Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> outer(const Tensor<Real>& a, const Tensor<Real>& b);
// Batched C[b] = A[b] * B[b]^T for A [B,m,k], B [B,n,k].
template <typename Real> Tensor<Real> bmm_nt(const Tensor<Real>& a, const Tensor<Real>& b);

// ---- network primitives ----
template <typename Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, const std::vector<int32_t>& ids);
// Mean cross-entropy over rows of logits [n, V] against integer targets.
template <typename Real>
Tensor<Real> cross_entropy_with_logits(const Tensor<Real>& logits, const std::vector<int32_t>& targets);

// updates[b,j,:] = sum_i W[b,i,j] * value[b,i,:] with
// W[b,i,j] = (attn[b,i,j] + eps) / sum_l (attn[b,l,j] + eps).
// Sums over the input axis use a value-sorted order, so the result is
// bit-identical under permutation of input rows.
template <typename Real>
Tensor<Real> weighted_mean(const Tensor<Real>& attn, const Tensor<Real>& value, Real eps);

// out[b,c] = sum_{a,e} F[b,a,e,c] * u1[b,a] * u2[b,e] for F [B,d,d,d].
template <typename Real>
Tensor<Real> tpr_read(const Tensor<Real>& f, const Tensor<Real>& u1, const Tensor<Real>& u2);
// out[b,a,e,c] = F[b,a,e,c] + beta[b] * u1[b,a] * u2[b,e] * w[b,c]; beta is [B] or [B,1].
template <typename Real>
Tensor<Real> tpr_rank1_update(const Tensor<Real>& f, const Tensor<Real>& u1, const Tensor<Real>& u2,
                              const Tensor<Real>& w, const Tensor<Real>& beta);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace aid
