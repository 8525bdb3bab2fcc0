// Bias-corrected Adam and the global-norm gradient clip used by the trainer.
#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace aid {

template <typename Real>
struct AdamState {
  int64_t step_count = 0;
  Real lr = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.98);
  Real eps_adam = Real(1e-8);
  // Shape-congruent with the parameter list given to adam_step.
  std::vector<std::vector<Real>> m, v;
};

// One Adam update over the parameter list, reading each tensor's accumulated
// gradient. Moment buffers are allocated on first use and must stay congruent
// with the parameters afterwards.
template <typename Real>
void adam_step(std::vector<Tensor<Real>>& params, AdamState<Real>& state);

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <typename Real>
Real clip_global_norm(std::vector<Tensor<Real>>& params, Real max_norm);

}  // namespace aid
