// Iterative slot-routed competitive attention that refines a fixed set of
// structured component vectors from a set of input features. Component slots
// are positional: slot i always feeds the same downstream role, so the
// output is deliberately not permutation-invariant in the components.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/linear.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace aid {

inline constexpr double kLayerNormEps = 1e-5;

enum class AttnActivation { kEluPlusOne, kNone, kReluPlusOne };

AttnActivation parse_attn_activation(const std::string& name);
std::string to_string(AttnActivation a);

template <typename Real>
struct AidConfig {
  int n_com = 3;
  int n_iter = 2;
  int n_inputs = 3;
  int d_inputs = 32;
  int d_com = 32;
  int d_mlp_update_hidden = 64;
  Real p_dropout = Real(0.5);
  Real eps_attn = Real(1e-8);
  bool use_query_residual = true;
  bool use_final_concat = true;
  AttnActivation attn_activation = AttnActivation::kEluPlusOne;

  void validate() const {
    AID_CHECK(n_com > 0 && n_inputs > 0 && d_inputs > 0 && d_com > 0 && d_mlp_update_hidden > 0,
              "AidConfig: dimensions must be positive");
    AID_CHECK(n_iter >= 0, "AidConfig: n_iter must be non-negative");
    AID_CHECK(eps_attn > Real(0), "AidConfig: eps_attn must be positive");
    AID_CHECK(p_dropout >= Real(0) && p_dropout < Real(1), "AidConfig: p_dropout must be in [0,1)");
  }
};

// Learned maps of the decomposition module. Sizes depend only on widths, not
// on the number of components, so one parameter set can serve call sites
// with different slot counts.
template <typename Real>
struct AidParams {
  Linear<Real> k, v;       // d_inputs -> d_com
  Linear<Real> q;          // d_com -> d_com
  Linear<Real> mlp_update_in;   // d_com -> hidden
  Linear<Real> mlp_update_out;  // hidden -> d_com
  Tensor<Real> ln_gamma, ln_beta;
  Linear<Real> mlp_final;  // (2*d_com or d_com) -> d_com

  static AidParams init(const AidConfig<Real>& cfg, Rng rng);
  void named(const std::string& prefix,
             std::vector<std::pair<std::string, Tensor<Real>>>& out) const;
  std::vector<Tensor<Real>> tensors() const;
  int64_t param_count() const;
};

// Row-stochastic attention between already-activated keys [n_inputs, d] and
// queries [n_com, d]: softmax of key.query^T over the component axis.
template <typename Real>
Tensor<Real> attention_matrix(const Tensor<Real>& key, const Tensor<Real>& query);

// One full decomposition pass over a batch.
//   inputs  [B, n_inputs, d_inputs]
//   initial [B, n_com, d_com]
// Returns refined components [B, n_com, d_com]. dropout_rng must be provided
// in train mode when p_dropout > 0 and the final concat branch is active.
template <typename Real>
Tensor<Real> aid_decompose(const Tensor<Real>& inputs, const Tensor<Real>& initial,
                           const AidParams<Real>& params, const AidConfig<Real>& cfg, bool train,
                           Rng* dropout_rng);

// Positional slot naming: row i of components carries slot_names[i].
// Accepts [n_com, d] or batched [B, n_com, d] (yielding [d] / [B, d] values).
template <typename Real>
std::map<std::string, Tensor<Real>> route_slots(const Tensor<Real>& components,
                                                const std::vector<std::string>& slot_names);

}  // namespace aid
