#include "nn/aid_module.hpp"

#include <cmath>

namespace aid {

AttnActivation parse_attn_activation(const std::string& name) {
  if (name == "elu") return AttnActivation::kEluPlusOne;
  if (name == "none") return AttnActivation::kNone;
  if (name == "relu") return AttnActivation::kReluPlusOne;
  fail("unknown attention activation '" + name + "' (expected elu|none|relu)");
}

std::string to_string(AttnActivation a) {
  switch (a) {
    case AttnActivation::kEluPlusOne: return "elu";
    case AttnActivation::kNone: return "none";
    case AttnActivation::kReluPlusOne: return "relu";
  }
  return "?";
}

namespace {

template <typename Real>
Tensor<Real> apply_activation(const Tensor<Real>& x, AttnActivation a) {
  switch (a) {
    case AttnActivation::kEluPlusOne: return elu_plus_one(x);
    case AttnActivation::kNone: return x;
    case AttnActivation::kReluPlusOne: return relu_plus_one(x);
  }
  return x;
}

// Applies a linear map to the feature axis of [B, n, d_in].
template <typename Real>
Tensor<Real> project_rows(const Tensor<Real>& x, const Linear<Real>& lin, int64_t d_out) {
  int64_t b = x.dim(0), n = x.dim(1);
  Tensor<Real> flat = reshape(x, {b * n, x.dim(2)});
  return reshape(lin(flat), {b, n, d_out});
}

}  // namespace

template <typename Real>
AidParams<Real> AidParams<Real>::init(const AidConfig<Real>& cfg, Rng rng) {
  cfg.validate();
  AidParams<Real> p;
  p.k = Linear<Real>::init(cfg.d_inputs, cfg.d_com, rng.fork("k"));
  p.v = Linear<Real>::init(cfg.d_inputs, cfg.d_com, rng.fork("v"));
  p.q = Linear<Real>::init(cfg.d_com, cfg.d_com, rng.fork("q"));
  p.mlp_update_in = Linear<Real>::init(cfg.d_com, cfg.d_mlp_update_hidden, rng.fork("mlp_update_in"));
  p.mlp_update_out =
      Linear<Real>::init(cfg.d_mlp_update_hidden, cfg.d_com, rng.fork("mlp_update_out"));
  p.ln_gamma = Tensor<Real>::full({cfg.d_com}, Real(1));
  p.ln_gamma.set_requires_grad(true);
  p.ln_beta = Tensor<Real>::zeros({cfg.d_com}, true);
  int64_t final_in = cfg.use_final_concat ? 2 * cfg.d_com : cfg.d_com;
  p.mlp_final = Linear<Real>::init(final_in, cfg.d_com, rng.fork("mlp_final"));
  return p;
}

template <typename Real>
void AidParams<Real>::named(const std::string& prefix,
                            std::vector<std::pair<std::string, Tensor<Real>>>& out) const {
  out.emplace_back(prefix + "k.w", k.w);
  out.emplace_back(prefix + "k.b", k.b);
  out.emplace_back(prefix + "v.w", v.w);
  out.emplace_back(prefix + "v.b", v.b);
  out.emplace_back(prefix + "q.w", q.w);
  out.emplace_back(prefix + "q.b", q.b);
  out.emplace_back(prefix + "mlp_update_in.w", mlp_update_in.w);
  out.emplace_back(prefix + "mlp_update_in.b", mlp_update_in.b);
  out.emplace_back(prefix + "mlp_update_out.w", mlp_update_out.w);
  out.emplace_back(prefix + "mlp_update_out.b", mlp_update_out.b);
  out.emplace_back(prefix + "ln.gamma", ln_gamma);
  out.emplace_back(prefix + "ln.beta", ln_beta);
  out.emplace_back(prefix + "mlp_final.w", mlp_final.w);
  out.emplace_back(prefix + "mlp_final.b", mlp_final.b);
}

template <typename Real>
std::vector<Tensor<Real>> AidParams<Real>::tensors() const {
  std::vector<std::pair<std::string, Tensor<Real>>> named_list;
  named("", named_list);
  std::vector<Tensor<Real>> out;
  for (auto& [_, t] : named_list) out.push_back(t);
  return out;
}

template <typename Real>
int64_t AidParams<Real>::param_count() const {
  int64_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

template <typename Real>
Tensor<Real> attention_matrix(const Tensor<Real>& key, const Tensor<Real>& query) {
  AID_CHECK(key.rank() == 2 && query.rank() == 2, "attention_matrix: operands must be rank 2");
  AID_CHECK(key.dim(1) == query.dim(1),
            "attention_matrix: feature dims differ, " + shape_str(key.shape()) + " vs " +
                shape_str(query.shape()));
  Tensor<Real> k3 = reshape(key, {1, key.dim(0), key.dim(1)});
  Tensor<Real> q3 = reshape(query, {1, query.dim(0), query.dim(1)});
  Tensor<Real> scores = bmm_nt(k3, q3);  // [1, n_inputs, n_com]
  Tensor<Real> attn = softmax_lastdim(scores);
  return reshape(attn, {key.dim(0), query.dim(0)});
}

template <typename Real>
Tensor<Real> aid_decompose(const Tensor<Real>& inputs, const Tensor<Real>& initial,
                           const AidParams<Real>& params, const AidConfig<Real>& cfg, bool train,
                           Rng* dropout_rng) {
  cfg.validate();
  AID_CHECK(inputs.rank() == 3 && inputs.dim(1) == cfg.n_inputs && inputs.dim(2) == cfg.d_inputs,
            "aid_decompose: inputs must be [B," + std::to_string(cfg.n_inputs) + "," +
                std::to_string(cfg.d_inputs) + "], got " + shape_str(inputs.shape()));
  AID_CHECK(initial.rank() == 3 && initial.dim(1) == cfg.n_com && initial.dim(2) == cfg.d_com,
            "aid_decompose: initial components must be [B," + std::to_string(cfg.n_com) + "," +
                std::to_string(cfg.d_com) + "], got " + shape_str(initial.shape()));
  AID_CHECK(inputs.dim(0) == initial.dim(0), "aid_decompose: batch sizes differ");
  int64_t b = inputs.dim(0);

  // Keys and values are projected once, before the loop; queries are
  // recomputed from the current components every iteration.
  Tensor<Real> key = project_rows(inputs, params.k, cfg.d_com);
  Tensor<Real> value = project_rows(inputs, params.v, cfg.d_com);
  key = apply_activation(key, cfg.attn_activation);

  Real query_scale = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(cfg.d_com)));
  Tensor<Real> components = initial;
  for (int it = 0; it < cfg.n_iter; ++it) {
    Tensor<Real> query = project_rows(components, params.q, cfg.d_com);
    if (cfg.use_query_residual) query = add(query, initial);
    query = mul_scalar(query, query_scale);
    query = apply_activation(query, cfg.attn_activation);
    Tensor<Real> attn = softmax_lastdim(bmm_nt(key, query));  // rows: inputs, cols: components
    Tensor<Real> updates = weighted_mean(attn, value, cfg.eps_attn);
    Tensor<Real> flat = reshape(updates, {b * cfg.n_com, cfg.d_com});
    Tensor<Real> normed = layer_norm_affine(flat, params.ln_gamma, params.ln_beta,
                                            static_cast<Real>(kLayerNormEps));
    Tensor<Real> hidden = relu(params.mlp_update_in(normed));
    Tensor<Real> delta = params.mlp_update_out(hidden);
    delta = reshape(delta, {b, static_cast<int64_t>(cfg.n_com), static_cast<int64_t>(cfg.d_com)});
    components = add(components, mul_scalar(delta, Real(1) / static_cast<Real>(cfg.d_com)));
  }

  Tensor<Real> final_in;
  if (cfg.use_final_concat) {
    Tensor<Real> skip = initial;
    if (train && cfg.p_dropout > Real(0)) {
      AID_CHECK(dropout_rng != nullptr, "aid_decompose: dropout requires an RNG in train mode");
      skip = dropout(skip, cfg.p_dropout, *dropout_rng);
    }
    final_in = concat<Real>({reshape(components, {b * cfg.n_com, cfg.d_com}),
                             reshape(skip, {b * cfg.n_com, cfg.d_com})},
                            1);
  } else {
    final_in = reshape(components, {b * cfg.n_com, cfg.d_com});
  }
  Tensor<Real> out = params.mlp_final(final_in);
  return reshape(out, {b, static_cast<int64_t>(cfg.n_com), static_cast<int64_t>(cfg.d_com)});
}

template <typename Real>
std::map<std::string, Tensor<Real>> route_slots(const Tensor<Real>& components,
                                                const std::vector<std::string>& slot_names) {
  AID_CHECK(components.rank() == 2 || components.rank() == 3,
            "route_slots: components must be [n_com,d] or [B,n_com,d]");
  int axis = components.rank() == 2 ? 0 : 1;
  AID_CHECK(components.dim(axis) == static_cast<int64_t>(slot_names.size()),
            "route_slots: " + std::to_string(slot_names.size()) + " names for " +
                std::to_string(components.dim(axis)) + " component rows");
  std::map<std::string, Tensor<Real>> out;
  int64_t d = components.dim(components.rank() - 1);
  for (size_t i = 0; i < slot_names.size(); ++i) {
    Tensor<Real> row = slice(components, axis, static_cast<int64_t>(i), 1);
    if (components.rank() == 2) {
      row = reshape(row, {d});
    } else {
      row = reshape(row, {components.dim(0), d});
    }
    AID_CHECK(out.emplace(slot_names[i], row).second,
              "route_slots: duplicate slot name '" + slot_names[i] + "'");
  }
  return out;
}

#define AID_INSTANTIATE_MODULE(R)                                                             \
  template struct AidParams<R>;                                                               \
  template Tensor<R> attention_matrix(const Tensor<R>&, const Tensor<R>&);                    \
  template Tensor<R> aid_decompose(const Tensor<R>&, const Tensor<R>&, const AidParams<R>&,   \
                                   const AidConfig<R>&, bool, Rng*);                          \
  template std::map<std::string, Tensor<R>> route_slots(const Tensor<R>&,                     \
                                                        const std::vector<std::string>&);

AID_INSTANTIATE_MODULE(float)
AID_INSTANTIATE_MODULE(double)

#undef AID_INSTANTIATE_MODULE

}  // namespace aid
