// Affine map y = x W + b with fan-in uniform initialization.
#pragma once

#include <cmath>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace aid {

template <typename Real>
struct Linear {
  Tensor<Real> w;  // [in, out]
  Tensor<Real> b;  // [out]

  static Linear init(int64_t in, int64_t out, Rng rng) {
    AID_CHECK(in > 0 && out > 0, "Linear: dimensions must be positive");
    Real bound = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(in)));
    Linear l;
    Rng rw = rng.fork("w");
    Rng rb = rng.fork("b");
    l.w = Tensor<Real>::uniform({in, out}, -bound, bound, rw, true);
    l.b = Tensor<Real>::uniform({out}, -bound, bound, rb, true);
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return add_bias(matmul(x, w), b); }

  int64_t in_dim() const { return w.dim(0); }
  int64_t out_dim() const { return w.dim(1); }
  int64_t param_count() const { return w.size() + b.size(); }
};

}  // namespace aid
