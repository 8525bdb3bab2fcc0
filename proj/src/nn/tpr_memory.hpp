// Third-order tensor-product fast-weight memory. Writing binds the outer
// product of two role vectors to a filler with a replace-style update;
// reading contracts the memory with a pair of unbinding vectors, optionally
// chained over several hops with a parameter-free layer norm between hops.
//
// All operations are batched ([B, d, d, d] memories with [B, d] operands);
// semantics are per batch element.
#pragma once

#include <vector>

#include "core/tensor.hpp"
#include "nn/aid_module.hpp"

namespace aid {
namespace tpr {

// Fresh all-zero memory for an episode.
template <typename Real>
Tensor<Real> empty_memory(int64_t batch, int64_t d_mem) {
  return Tensor<Real>::zeros({batch, d_mem, d_mem, d_mem});
}

// filler[b,c] = sum_{a,e} F[b,a,e,c] * u1[b,a] * u2[b,e]
template <typename Real>
Tensor<Real> read(const Tensor<Real>& f, const Tensor<Real>& u1, const Tensor<Real>& u2) {
  return tpr_read(f, u1, u2);
}

// F' = F + beta * (v - read(F, k1, k2)) (x) k1 (x) k2, laid out so that
// read(F', k1, k2) moves toward v. beta is [B] or [B,1].
template <typename Real>
Tensor<Real> write(const Tensor<Real>& f, const Tensor<Real>& k1, const Tensor<Real>& k2,
                   const Tensor<Real>& v, const Tensor<Real>& beta) {
  Tensor<Real> v_old = tpr_read(f, k1, k2);
  return tpr_rank1_update(f, k1, k2, sub(v, v_old), beta);
}

// s_0 = n0; s_i = layer_norm(read(F, s_{i-1}, hops[i])); returns s_{N}.
template <typename Real>
Tensor<Real> multihop_read(const Tensor<Real>& f, const Tensor<Real>& n0,
                           const std::vector<Tensor<Real>>& hops) {
  AID_CHECK(!hops.empty(), "multihop_read: at least one hop vector required");
  Tensor<Real> s = n0;
  for (const auto& e : hops)
    s = layer_norm(tpr_read(f, s, e), static_cast<Real>(kLayerNormEps));
  return s;
}

}  // namespace tpr
}  // namespace aid
