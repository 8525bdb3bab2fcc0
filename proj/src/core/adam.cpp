#include "core/adam.hpp"

#include <cmath>

namespace aid {

template <typename Real>
void adam_step(std::vector<Tensor<Real>>& params, AdamState<Real>& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(static_cast<size_t>(params[i].size()), Real(0));
      state.v[i].assign(static_cast<size_t>(params[i].size()), Real(0));
    }
  }
  AID_CHECK(state.m.size() == params.size(), "adam_step: parameter list changed size");
  state.step_count += 1;
  Real bc1 = Real(1) - std::pow(state.beta1, static_cast<Real>(state.step_count));
  Real bc2 = Real(1) - std::pow(state.beta2, static_cast<Real>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    AID_CHECK(p.has_grad(), "adam_step: missing gradient for parameter " + std::to_string(i));
    AID_CHECK(state.m[i].size() == static_cast<size_t>(p.size()),
              "adam_step: moment shape mismatch for parameter " + std::to_string(i));
    auto val = p.raw_data();
    auto g = p.grad();
    Real* m = state.m[i].data();
    Real* v = state.v[i].data();
    for (size_t j = 0; j < val.size(); ++j) {
      m[j] = state.beta1 * m[j] + (Real(1) - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (Real(1) - state.beta2) * g[j] * g[j];
      Real mhat = m[j] / bc1;
      Real vhat = v[j] / bc2;
      val[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps_adam);
    }
  }
}

template <typename Real>
Real clip_global_norm(std::vector<Tensor<Real>>& params, Real max_norm) {
  double sq = 0;
  for (auto& p : params) {
    for (Real g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  Real norm = static_cast<Real>(std::sqrt(sq));
  if (norm > max_norm && norm > Real(0)) {
    Real scale = max_norm / norm;
    for (auto& p : params) {
      auto g = p.raw_grad();
      for (auto& v : g) v *= scale;
    }
  }
  return norm;
}

template void adam_step(std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step(std::vector<Tensor<double>>&, AdamState<double>&);
template float clip_global_norm(std::vector<Tensor<float>>&, float);
template double clip_global_norm(std::vector<Tensor<double>>&, double);

}  // namespace aid
