#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace aid {

namespace {

template <typename Real>
std::shared_ptr<detail::Node<Real>> make_node(Shape shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node<Real>>();
  n->shape = std::move(shape);
  n->value.resize(static_cast<size_t>(numel(n->shape)));
  n->requires_grad = requires_grad;
  return n;
}

template <typename Real>
void axpy(const std::vector<Real>& x, std::vector<Real>& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += x[i];
}

// outer = product of dims before axis, inner = product after.
inline void axis_extents(const Shape& s, int axis, int64_t& outer, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return wrap(make_node<Real>(std::move(shape), requires_grad));
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real v) {
  auto n = make_node<Real>(std::move(shape), false);
  std::fill(n->value.begin(), n->value.end(), v);
  return wrap(std::move(n));
}

template <typename Real>
Tensor<Real> Tensor<Real>::from_data(Shape shape, std::vector<Real> data, bool requires_grad) {
  AID_CHECK(numel(shape) == static_cast<int64_t>(data.size()),
            "from_data: shape " + shape_str(shape) + " does not match data length " +
                std::to_string(data.size()));
  auto n = std::make_shared<NodeT>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

template <typename Real>
Tensor<Real> Tensor<Real>::uniform(Shape shape, Real lo, Real hi, Rng& rng, bool requires_grad) {
  auto n = make_node<Real>(std::move(shape), requires_grad);
  for (auto& v : n->value) v = static_cast<Real>(rng.uniform(lo, hi));
  return wrap(std::move(n));
}

template <typename Real>
void Tensor<Real>::backward(bool release_intermediate_grads) const {
  AID_CHECK(node_ != nullptr, "backward: undefined tensor");
  AID_CHECK(size() == 1, "backward: loss must be scalar, got shape " + shape_str(shape()));
  AID_CHECK(node_->requires_grad, "backward: loss is not part of a gradient-tracked computation");

  // Iterative post-order over gradient-tracked ancestors.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      NodeT* p = top.first->parents[top.second++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
    if (release_intermediate_grads && n->backward) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape s) {
  AID_CHECK(numel(s) == x.size(),
            "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(s));
  auto out = make_node<Real>(std::move(s), x.requires_grad());
  out->value = std::vector<Real>(x.data().begin(), x.data().end());
  if (out->requires_grad) {
    out->parents = {x.node()};
    auto* px = x.node().get();
    out->backward = [px](detail::Node<Real>& self) {
      px->ensure_grad();
      axpy(self.grad, px->grad);
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& xs, int axis) {
  AID_CHECK(!xs.empty(), "concat: empty input list");
  const Shape& s0 = xs[0].shape();
  AID_CHECK(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: bad axis");
  int64_t axis_total = 0;
  bool rg = false;
  for (const auto& x : xs) {
    AID_CHECK(x.rank() == static_cast<int>(s0.size()), "concat: rank mismatch");
    for (size_t i = 0; i < s0.size(); ++i) {
      if (static_cast<int>(i) != axis)
        AID_CHECK(x.shape()[i] == s0[i], "concat: shape mismatch at axis " + std::to_string(i));
    }
    axis_total += x.dim(axis);
    rg = rg || x.requires_grad();
  }
  Shape os = s0;
  os[static_cast<size_t>(axis)] = axis_total;
  auto out = make_node<Real>(os, rg);

  int64_t outer, inner;
  axis_extents(os, axis, outer, inner);
  std::vector<int64_t> offsets(xs.size());
  {
    int64_t off = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
      offsets[k] = off;
      off += xs[k].dim(axis);
    }
  }
  for (size_t k = 0; k < xs.size(); ++k) {
    const Real* src = xs[k].data().data();
    int64_t len = xs[k].dim(axis);
    for (int64_t o = 0; o < outer; ++o) {
      Real* dst = out->value.data() + (o * axis_total + offsets[k]) * inner;
      std::copy(src + o * len * inner, src + (o + 1) * len * inner, dst);
    }
  }
  if (rg) {
    for (const auto& x : xs) out->parents.push_back(x.node());
    std::vector<int64_t> lens(xs.size());
    for (size_t k = 0; k < xs.size(); ++k) lens[k] = xs[k].dim(axis);
    out->backward = [outer, inner, axis_total, offsets, lens](detail::Node<Real>& self) {
      for (size_t k = 0; k < self.parents.size(); ++k) {
        auto* p = self.parents[k].get();
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          const Real* g = self.grad.data() + (o * axis_total + offsets[k]) * inner;
          Real* dst = p->grad.data() + o * lens[k] * inner;
          for (int64_t i = 0; i < lens[k] * inner; ++i) dst[i] += g[i];
        }
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, int axis, int64_t start, int64_t len) {
  AID_CHECK(axis >= 0 && axis < x.rank(), "slice: bad axis");
  AID_CHECK(start >= 0 && len > 0 && start + len <= x.dim(axis),
            "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                ") out of bounds for axis size " + std::to_string(x.dim(axis)));
  Shape os = x.shape();
  os[static_cast<size_t>(axis)] = len;
  auto out = make_node<Real>(os, x.requires_grad());
  int64_t outer, inner;
  axis_extents(x.shape(), axis, outer, inner);
  int64_t src_axis = x.dim(axis);
  const Real* src = x.data().data();
  for (int64_t o = 0; o < outer; ++o) {
    const Real* s = src + (o * src_axis + start) * inner;
    std::copy(s, s + len * inner, out->value.data() + o * len * inner);
  }
  if (out->requires_grad) {
    out->parents = {x.node()};
    auto* px = x.node().get();
    out->backward = [px, outer, inner, src_axis, start, len](detail::Node<Real>& self) {
      px->ensure_grad();
      for (int64_t o = 0; o < outer; ++o) {
        Real* dst = px->grad.data() + (o * src_axis + start) * inner;
        const Real* g = self.grad.data() + o * len * inner;
        for (int64_t i = 0; i < len * inner; ++i) dst[i] += g[i];
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  AID_CHECK(same_shape(a.shape(), b.shape()),
            "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto out = make_node<Real>(a.shape(), a.requires_grad() || b.requires_grad());
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = pa[i] + pb[i];
  if (out->requires_grad) {
    out->parents = {a.node(), b.node()};
    out->backward = [](detail::Node<Real>& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        axpy(self.grad, p->grad);
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  AID_CHECK(same_shape(a.shape(), b.shape()),
            "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto out = make_node<Real>(a.shape(), a.requires_grad() || b.requires_grad());
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = pa[i] - pb[i];
  if (out->requires_grad) {
    out->parents = {a.node(), b.node()};
    out->backward = [](detail::Node<Real>& self) {
      auto* pa_n = self.parents[0].get();
      auto* pb_n = self.parents[1].get();
      if (pa_n->requires_grad) {
        pa_n->ensure_grad();
        axpy(self.grad, pa_n->grad);
      }
      if (pb_n->requires_grad) {
        pb_n->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pb_n->grad[i] -= self.grad[i];
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  AID_CHECK(same_shape(a.shape(), b.shape()),
            "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto out = make_node<Real>(a.shape(), a.requires_grad() || b.requires_grad());
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = pa[i] * pb[i];
  if (out->requires_grad) {
    out->parents = {a.node(), b.node()};
    out->backward = [](detail::Node<Real>& self) {
      auto* pa_n = self.parents[0].get();
      auto* pb_n = self.parents[1].get();
      if (pa_n->requires_grad) {
        pa_n->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa_n->grad[i] += self.grad[i] * pb_n->value[i];
      }
      if (pb_n->requires_grad) {
        pb_n->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pb_n->grad[i] += self.grad[i] * pa_n->value[i];
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real s) {
  auto out = make_node<Real>(a.shape(), a.requires_grad());
  const Real* pa = a.data().data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = pa[i] + s;
  if (out->requires_grad) {
    out->parents = {a.node()};
    out->backward = [](detail::Node<Real>& self) {
      auto* p = self.parents[0].get();
      p->ensure_grad();
      axpy(self.grad, p->grad);
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> mul_scalar(const Tensor<Real>& a, Real s) {
  auto out = make_node<Real>(a.shape(), a.requires_grad());
  const Real* pa = a.data().data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = pa[i] * s;
  if (out->requires_grad) {
    out->parents = {a.node()};
    out->backward = [s](detail::Node<Real>& self) {
      auto* p = self.parents[0].get();
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * s;
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& bias) {
  AID_CHECK(bias.rank() == 1, "add_bias: bias must be rank 1");
  int64_t n = bias.dim(0);
  AID_CHECK(x.rank() >= 1 && x.dim(x.rank() - 1) == n,
            "add_bias: trailing dim of " + shape_str(x.shape()) + " does not match bias [" +
                std::to_string(n) + "]");
  auto out = make_node<Real>(x.shape(), x.requires_grad() || bias.requires_grad());
  const Real* px = x.data().data();
  const Real* pb = bias.data().data();
  int64_t rows = x.size() / n;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j) out->value[r * n + j] = px[r * n + j] + pb[j];
  if (out->requires_grad) {
    out->parents = {x.node(), bias.node()};
    out->backward = [rows, n](detail::Node<Real>& self) {
      auto* xp = self.parents[0].get();
      auto* bp = self.parents[1].get();
      if (xp->requires_grad) {
        xp->ensure_grad();
        axpy(self.grad, xp->grad);
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < n; ++j) bp->grad[j] += self.grad[r * n + j];
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

namespace {

// Shared scaffolding for unary maps: deriv(value_out, value_in).
template <typename Real, typename FwdFn, typename DerivFn>
Tensor<Real> unary_map(const Tensor<Real>& x, FwdFn fwd, DerivFn deriv) {
  auto out = make_node<Real>(x.shape(), x.requires_grad());
  const Real* px = x.data().data();
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = fwd(px[i]);
  if (out->requires_grad) {
    out->parents = {x.node()};
    out->backward = [deriv](detail::Node<Real>& self) {
      auto* p = self.parents[0].get();
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i] * deriv(self.value[i], p->value[i]);
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

}  // namespace

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  return unary_map(
      x, [](Real v) { return v > Real(0) ? v : Real(0); },
      [](Real, Real in) { return in > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  return unary_map(
      x,
      [](Real v) {
        return v >= Real(0) ? Real(1) / (Real(1) + std::exp(-v))
                            : std::exp(v) / (Real(1) + std::exp(v));
      },
      [](Real y, Real) { return y * (Real(1) - y); });
}

template <typename Real>
Tensor<Real> tanh_op(const Tensor<Real>& x) {
  return unary_map(
      x, [](Real v) { return std::tanh(v); }, [](Real y, Real) { return Real(1) - y * y; });
}

template <typename Real>
Tensor<Real> exp_op(const Tensor<Real>& x) {
  return unary_map(
      x, [](Real v) { return std::exp(v); }, [](Real y, Real) { return y; });
}

template <typename Real>
Tensor<Real> elu_plus_one(const Tensor<Real>& x) {
  return unary_map(
      x, [](Real v) { return v >= Real(0) ? v + Real(1) : std::exp(v); },
      [](Real, Real in) { return in >= Real(0) ? Real(1) : std::exp(in); });
}

template <typename Real>
Tensor<Real> relu_plus_one(const Tensor<Real>& x) {
  return unary_map(
      x, [](Real v) { return (v > Real(0) ? v : Real(0)) + Real(1); },
      [](Real, Real in) { return in > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, Real p, Rng& rng) {
  AID_CHECK(p >= Real(0) && p < Real(1), "dropout: p must be in [0,1)");
  if (p == Real(0)) return x;
  auto out = make_node<Real>(x.shape(), x.requires_grad());
  auto mask = std::make_shared<std::vector<Real>>(out->value.size());
  Real keep_scale = Real(1) / (Real(1) - p);
  const Real* px = x.data().data();
  for (size_t i = 0; i < out->value.size(); ++i) {
    (*mask)[i] = rng.uniform() < static_cast<double>(p) ? Real(0) : keep_scale;
    out->value[i] = px[i] * (*mask)[i];
  }
  if (out->requires_grad) {
    out->parents = {x.node()};
    out->backward = [mask](detail::Node<Real>& self) {
      auto* p_n = self.parents[0].get();
      p_n->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p_n->grad[i] += self.grad[i] * (*mask)[i];
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// reductions and row ops
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> sum_all(const Tensor<Real>& x) {
  auto out = make_node<Real>({1}, x.requires_grad());
  Real acc = Real(0);
  for (Real v : x.data()) acc += v;
  out->value[0] = acc;
  if (out->requires_grad) {
    out->parents = {x.node()};
    out->backward = [](detail::Node<Real>& self) {
      auto* p = self.parents[0].get();
      p->ensure_grad();
      Real g = self.grad[0];
      for (auto& v : p->grad) v += g;
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> softmax_lastdim(const Tensor<Real>& x) {
  AID_CHECK(x.rank() >= 1, "softmax: rank must be >= 1");
  int64_t n = x.dim(x.rank() - 1);
  int64_t rows = x.size() / n;
  for (Real v : x.data()) AID_CHECK(std::isfinite(v), "softmax: non-finite input");
  auto out = make_node<Real>(x.shape(), x.requires_grad());
  const Real* px = x.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const Real* in = px + r * n;
    Real* o = out->value.data() + r * n;
    Real mx = in[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    Real sum = Real(0);
    for (int64_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    Real inv = Real(1) / sum;
    for (int64_t j = 0; j < n; ++j) o[j] *= inv;
  }
  if (out->requires_grad) {
    out->parents = {x.node()};
    out->backward = [rows, n](detail::Node<Real>& self) {
      auto* p = self.parents[0].get();
      p->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const Real* y = self.value.data() + r * n;
        const Real* g = self.grad.data() + r * n;
        Real dot = Real(0);
        for (int64_t j = 0; j < n; ++j) dot += g[j] * y[j];
        Real* dst = p->grad.data() + r * n;
        for (int64_t j = 0; j < n; ++j) dst[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

namespace {

template <typename Real>
void layer_norm_rows(const Real* in, Real* out, std::vector<Real>& rstd, int64_t rows, int64_t n,
                     Real eps) {
  rstd.resize(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const Real* x = in + r * n;
    Real* y = out + r * n;
    Real mean = Real(0);
    for (int64_t j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<Real>(n);
    Real var = Real(0);
    for (int64_t j = 0; j < n; ++j) {
      Real d = x[j] - mean;
      var += d * d;
    }
    var /= static_cast<Real>(n);
    Real rs = Real(1) / std::sqrt(var + eps);
    rstd[static_cast<size_t>(r)] = rs;
    for (int64_t j = 0; j < n; ++j) y[j] = (x[j] - mean) * rs;
  }
}

// dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)), accumulated.
template <typename Real>
void layer_norm_backward_row(const Real* dxhat, const Real* xhat, Real rstd, Real* dx, int64_t n) {
  Real m1 = Real(0), m2 = Real(0);
  for (int64_t j = 0; j < n; ++j) {
    m1 += dxhat[j];
    m2 += dxhat[j] * xhat[j];
  }
  m1 /= static_cast<Real>(n);
  m2 /= static_cast<Real>(n);
  for (int64_t j = 0; j < n; ++j) dx[j] += rstd * (dxhat[j] - m1 - xhat[j] * m2);
}

}  // namespace

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, Real eps) {
  AID_CHECK(x.rank() >= 1, "layer_norm: rank must be >= 1");
  int64_t n = x.dim(x.rank() - 1);
  int64_t rows = x.size() / n;
  auto out = make_node<Real>(x.shape(), x.requires_grad());
  auto rstd = std::make_shared<std::vector<Real>>();
  layer_norm_rows(x.data().data(), out->value.data(), *rstd, rows, n, eps);
  if (out->requires_grad) {
    out->parents = {x.node()};
    out->backward = [rstd, rows, n](detail::Node<Real>& self) {
      auto* p = self.parents[0].get();
      p->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        layer_norm_backward_row(self.grad.data() + r * n, self.value.data() + r * n,
                                (*rstd)[static_cast<size_t>(r)], p->grad.data() + r * n, n);
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> layer_norm_affine(const Tensor<Real>& x, const Tensor<Real>& gamma,
                               const Tensor<Real>& beta, Real eps) {
  AID_CHECK(x.rank() >= 1, "layer_norm: rank must be >= 1");
  int64_t n = x.dim(x.rank() - 1);
  AID_CHECK(gamma.rank() == 1 && gamma.dim(0) == n && beta.rank() == 1 && beta.dim(0) == n,
            "layer_norm: gamma/beta must be [n]");
  int64_t rows = x.size() / n;
  bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  auto out = make_node<Real>(x.shape(), rg);
  auto rstd = std::make_shared<std::vector<Real>>();
  auto xhat = std::make_shared<std::vector<Real>>(static_cast<size_t>(rows * n));
  layer_norm_rows(x.data().data(), xhat->data(), *rstd, rows, n, eps);
  const Real* pg = gamma.data().data();
  const Real* pb = beta.data().data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j)
      out->value[r * n + j] = (*xhat)[static_cast<size_t>(r * n + j)] * pg[j] + pb[j];
  if (rg) {
    out->parents = {x.node(), gamma.node(), beta.node()};
    out->backward = [rstd, xhat, rows, n](detail::Node<Real>& self) {
      auto* xp = self.parents[0].get();
      auto* gp = self.parents[1].get();
      auto* bp = self.parents[2].get();
      if (gp->requires_grad) {
        gp->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < n; ++j)
            gp->grad[j] += self.grad[r * n + j] * (*xhat)[static_cast<size_t>(r * n + j)];
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < n; ++j) bp->grad[j] += self.grad[r * n + j];
      }
      if (xp->requires_grad) {
        xp->ensure_grad();
        std::vector<Real> dxhat(static_cast<size_t>(n));
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < n; ++j)
            dxhat[static_cast<size_t>(j)] = self.grad[r * n + j] * gp->value[j];
          layer_norm_backward_row(dxhat.data(), xhat->data() + r * n,
                                  (*rstd)[static_cast<size_t>(r)], xp->grad.data() + r * n, n);
        }
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// network primitives
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, const std::vector<int32_t>& ids) {
  AID_CHECK(table.rank() == 2, "embedding_lookup: table must be [V, d]");
  int64_t v = table.dim(0), d = table.dim(1);
  for (int32_t id : ids)
    AID_CHECK(id >= 0 && id < v, "embedding_lookup: unknown id " + std::to_string(id));
  auto out = make_node<Real>({static_cast<int64_t>(ids.size()), d}, table.requires_grad());
  const Real* pt = table.data().data();
  for (size_t r = 0; r < ids.size(); ++r)
    std::copy(pt + ids[r] * d, pt + (ids[r] + 1) * d, out->value.data() + static_cast<int64_t>(r) * d);
  if (out->requires_grad) {
    out->parents = {table.node()};
    auto ids_copy = std::make_shared<std::vector<int32_t>>(ids);
    out->backward = [ids_copy, d](detail::Node<Real>& self) {
      auto* p = self.parents[0].get();
      p->ensure_grad();
      for (size_t r = 0; r < ids_copy->size(); ++r) {
        const Real* g = self.grad.data() + static_cast<int64_t>(r) * d;
        Real* dst = p->grad.data() + (*ids_copy)[r] * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += g[j];
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> cross_entropy_with_logits(const Tensor<Real>& logits,
                                       const std::vector<int32_t>& targets) {
  AID_CHECK(logits.rank() == 2, "cross_entropy: logits must be [n, V]");
  int64_t rows = logits.dim(0), v = logits.dim(1);
  AID_CHECK(rows == static_cast<int64_t>(targets.size()),
            "cross_entropy: row/target count mismatch");
  for (int32_t t : targets) AID_CHECK(t >= 0 && t < v, "cross_entropy: target out of range");
  auto out = make_node<Real>({1}, logits.requires_grad());
  auto probs = std::make_shared<std::vector<Real>>(static_cast<size_t>(rows * v));
  const Real* px = logits.data().data();
  Real total = Real(0);
  for (int64_t r = 0; r < rows; ++r) {
    const Real* in = px + r * v;
    Real mx = in[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, in[j]);
    Real sum = Real(0);
    for (int64_t j = 0; j < v; ++j) sum += std::exp(in[j] - mx);
    Real lse = mx + std::log(sum);
    for (int64_t j = 0; j < v; ++j) (*probs)[static_cast<size_t>(r * v + j)] = std::exp(in[j] - lse);
    total += lse - in[targets[static_cast<size_t>(r)]];
  }
  out->value[0] = total / static_cast<Real>(rows);
  if (out->requires_grad) {
    out->parents = {logits.node()};
    auto targets_copy = std::make_shared<std::vector<int32_t>>(targets);
    out->backward = [probs, targets_copy, rows, v](detail::Node<Real>& self) {
      auto* p = self.parents[0].get();
      p->ensure_grad();
      Real scale = self.grad[0] / static_cast<Real>(rows);
      for (int64_t r = 0; r < rows; ++r) {
        Real* dst = p->grad.data() + r * v;
        const Real* q = probs->data() + r * v;
        for (int64_t j = 0; j < v; ++j) dst[j] += scale * q[j];
        dst[(*targets_copy)[static_cast<size_t>(r)]] -= scale;
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// explicit instantiations
// ---------------------------------------------------------------------------

#define AID_INSTANTIATE_CORE(R)                                                                    \
  template class Tensor<R>;                                                                        \
  template Tensor<R> reshape(const Tensor<R>&, Shape);                                            \
  template Tensor<R> concat(const std::vector<Tensor<R>>&, int);                                  \
  template Tensor<R> slice(const Tensor<R>&, int, int64_t, int64_t);                              \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> sub(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> add_scalar(const Tensor<R>&, R);                                             \
  template Tensor<R> mul_scalar(const Tensor<R>&, R);                                             \
  template Tensor<R> add_bias(const Tensor<R>&, const Tensor<R>&);                                \
  template Tensor<R> relu(const Tensor<R>&);                                                      \
  template Tensor<R> sigmoid(const Tensor<R>&);                                                   \
  template Tensor<R> tanh_op(const Tensor<R>&);                                                   \
  template Tensor<R> exp_op(const Tensor<R>&);                                                    \
  template Tensor<R> elu_plus_one(const Tensor<R>&);                                              \
  template Tensor<R> relu_plus_one(const Tensor<R>&);                                             \
  template Tensor<R> dropout(const Tensor<R>&, R, Rng&);                                          \
  template Tensor<R> sum_all(const Tensor<R>&);                                                   \
  template Tensor<R> softmax_lastdim(const Tensor<R>&);                                           \
  template Tensor<R> layer_norm(const Tensor<R>&, R);                                             \
  template Tensor<R> layer_norm_affine(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, R);  \
  template Tensor<R> embedding_lookup(const Tensor<R>&, const std::vector<int32_t>&);             \
  template Tensor<R> cross_entropy_with_logits(const Tensor<R>&, const std::vector<int32_t>&);

AID_INSTANTIATE_CORE(float)
AID_INSTANTIATE_CORE(double)

#undef AID_INSTANTIATE_CORE

}  // namespace aid
