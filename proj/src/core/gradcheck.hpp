// Central finite-difference validation of reverse-mode gradients.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace aid {

struct GradcheckReport {
  double max_rel_err = 0;
  bool pass = false;
  // Parameter index / coordinate of the worst disagreement, for diagnostics.
  std::string worst;
};

// Compares the analytic gradient of f() against (f(p+h)-f(p-h)) / 2h per
// coordinate. f must rebuild its graph from the current parameter values and
// be deterministic (it is evaluated twice up front to verify this; dropout
// must be disabled or frozen). When max_coords_per_param > 0, that many
// coordinates per parameter are sampled with the given seed instead of
// sweeping all of them. rel_err = |a-n| / max(1, |a|, |n|).
template <typename Real>
GradcheckReport gradcheck(const std::function<Tensor<Real>()>& f, std::vector<Tensor<Real>> params,
                          Real h, Real tol, int max_coords_per_param = -1,
                          uint64_t sample_seed = 0);

}  // namespace aid
