#include "nn/fwm_model.hpp"

#include "nn/tpr_memory.hpp"

namespace aid {

template <typename Real>
ModelParams<Real> ModelParams<Real>::init(const ModelConfig<Real>& cfg, Rng rng) {
  cfg.validate();
  ModelParams<Real> p;
  Real emb_bound = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(cfg.d_embed)));
  Rng emb_rng = rng.fork("embedding");
  p.embedding = Tensor<Real>::uniform({cfg.vocab, cfg.d_embed}, -emb_bound, emb_bound, emb_rng, true);
  p.input_transform = Linear<Real>::init(cfg.input_width(), cfg.n_inputs * cfg.d_sub,
                                         rng.fork("input_transform"));
  p.lstm = Linear<Real>::init(cfg.d_sub + cfg.d_lstm, 4 * cfg.d_lstm, rng.fork("lstm"));
  p.enc_init = Linear<Real>::init(cfg.d_hidden_cat(), cfg.n_com_enc() * cfg.d_mem,
                                  rng.fork("enc_init"));
  p.dec_init = Linear<Real>::init(cfg.d_hidden_cat(), cfg.n_com_dec() * cfg.d_mem,
                                  rng.fork("dec_init"));
  p.beta_head = Linear<Real>::init(cfg.d_hidden_cat(), 1, rng.fork("beta_head"));
  p.readout = Linear<Real>::init(cfg.d_hidden_cat() + cfg.d_mem, cfg.y_vocab, rng.fork("readout"));
  if (cfg.use_aid) p.aid = AidParams<Real>::init(cfg.aid_cfg(cfg.n_com_enc()), rng.fork("aid"));
  return p;
}

template <typename Real>
std::vector<std::pair<std::string, Tensor<Real>>> ModelParams<Real>::named() const {
  std::vector<std::pair<std::string, Tensor<Real>>> out;
  out.emplace_back("embedding", embedding);
  auto add_linear = [&out](const std::string& name, const Linear<Real>& l) {
    out.emplace_back(name + ".w", l.w);
    out.emplace_back(name + ".b", l.b);
  };
  add_linear("input_transform", input_transform);
  add_linear("lstm", lstm);
  add_linear("enc_init", enc_init);
  add_linear("dec_init", dec_init);
  add_linear("beta_head", beta_head);
  add_linear("readout", readout);
  if (aid) aid->named("aid.", out);
  return out;
}

template <typename Real>
std::vector<Tensor<Real>> ModelParams<Real>::tensors() const {
  std::vector<Tensor<Real>> out;
  for (auto& [_, t] : named()) out.push_back(t);
  return out;
}

template <typename Real>
int64_t ModelParams<Real>::param_count() const {
  int64_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

template <typename Real>
void ModelParams<Real>::zero_grad() const {
  for (const auto& t : tensors()) t.zero_grad();
}

template <typename Real>
ModelState<Real> ModelState<Real>::initial(const ModelConfig<Real>& cfg, int64_t batch) {
  ModelState<Real> s;
  s.h = Tensor<Real>::zeros({cfg.n_inputs * batch, cfg.d_lstm});
  s.c = Tensor<Real>::zeros({cfg.n_inputs * batch, cfg.d_lstm});
  s.f = tpr::empty_memory<Real>(batch, cfg.d_mem);
  return s;
}

template <typename Real>
std::vector<Tensor<Real>> partition_transform(const Tensor<Real>& x, const Linear<Real>& transform,
                                              int n_inputs, int d_sub) {
  AID_CHECK(transform.out_dim() == static_cast<int64_t>(n_inputs) * d_sub,
            "partition_transform: transform output width " + std::to_string(transform.out_dim()) +
                " is not n_inputs * d_sub");
  Tensor<Real> xhat = transform(x);
  std::vector<Tensor<Real>> chunks;
  chunks.reserve(static_cast<size_t>(n_inputs));
  for (int i = 0; i < n_inputs; ++i)
    chunks.push_back(slice(xhat, 1, static_cast<int64_t>(i) * d_sub, d_sub));
  return chunks;
}

template <typename Real>
LstmState<Real> lstm_cell(const Tensor<Real>& x, const LstmState<Real>& state,
                          const Linear<Real>& lin) {
  int64_t hidden = state.h.dim(1);
  AID_CHECK(lin.out_dim() == 4 * hidden, "lstm_cell: weight output width must be 4 * hidden");
  Tensor<Real> gates = lin(concat<Real>({x, state.h}, 1));
  Tensor<Real> i = sigmoid(slice(gates, 1, 0, hidden));
  Tensor<Real> f = sigmoid(slice(gates, 1, hidden, hidden));
  Tensor<Real> g = tanh_op(slice(gates, 1, 2 * hidden, hidden));
  Tensor<Real> o = sigmoid(slice(gates, 1, 3 * hidden, hidden));
  LstmState<Real> out;
  out.c = add(mul(f, state.c), mul(i, g));
  out.h = mul(o, tanh_op(out.c));
  return out;
}

template <typename Real>
std::vector<Tensor<Real>> modular_lstm_step(const std::vector<Tensor<Real>>& chunks,
                                            LstmState<Real>& state, const Linear<Real>& lin) {
  AID_CHECK(!chunks.empty(), "modular_lstm_step: no chunks");
  int64_t b = chunks[0].dim(0);
  int64_t n = static_cast<int64_t>(chunks.size());
  AID_CHECK(state.h.dim(0) == n * b && state.c.dim(0) == n * b,
            "modular_lstm_step: state arity does not match chunk count");
  // Weight sharing across modules: one cell over module-major stacked rows.
  Tensor<Real> stacked = concat(chunks, 0);
  LstmState<Real> next = lstm_cell(stacked, state, lin);
  state = next;
  std::vector<Tensor<Real>> hiddens;
  hiddens.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) hiddens.push_back(slice(next.h, 0, i * b, b));
  return hiddens;
}

template <typename Real>
Tensor<Real> make_initial_components(const Tensor<Real>& hidden_cat, const Linear<Real>& lin,
                                     int n_com, int d_com) {
  AID_CHECK(lin.out_dim() == static_cast<int64_t>(n_com) * d_com,
            "make_initial_components: affine output width must be n_com * d_com");
  Tensor<Real> flat = lin(hidden_cat);
  return reshape(flat, {hidden_cat.dim(0), static_cast<int64_t>(n_com), static_cast<int64_t>(d_com)});
}

template <typename Real>
Tensor<Real> model_step(const Tensor<Real>& input, ModelState<Real>& state,
                        const ModelParams<Real>& params, const ModelConfig<Real>& cfg, bool train,
                        Rng* dropout_rng, StepCapture<Real>* capture, int n_iter_override) {
  AID_CHECK(input.rank() == 2 && input.dim(1) == cfg.input_width(),
            "model_step: input must be [B, " + std::to_string(cfg.input_width()) + "], got " +
                shape_str(input.shape()));
  int64_t b = input.dim(0);

  std::vector<Tensor<Real>> chunks =
      partition_transform(input, params.input_transform, cfg.n_inputs, cfg.d_sub);
  LstmState<Real> lstm_state{state.h, state.c};
  std::vector<Tensor<Real>> hiddens = modular_lstm_step(chunks, lstm_state, params.lstm);
  state.h = lstm_state.h;
  state.c = lstm_state.c;

  Tensor<Real> hidden_cat = concat(hiddens, 1);  // [B, n_inputs * d_lstm]
  std::vector<Tensor<Real>> feature_rows;
  feature_rows.reserve(hiddens.size());
  for (auto& h : hiddens) feature_rows.push_back(reshape(h, {b, 1, cfg.d_lstm}));
  Tensor<Real> features = concat(feature_rows, 1);  // [B, n_inputs, d_lstm]

  // Encoder path: derive role/filler slots and write into the memory.
  Tensor<Real> enc_components =
      make_initial_components(hidden_cat, params.enc_init, cfg.n_com_enc(), cfg.d_mem);
  if (cfg.use_aid)
    enc_components = aid_decompose(features, enc_components, *params.aid,
                                   cfg.aid_cfg(cfg.n_com_enc(), n_iter_override), train,
                                   dropout_rng);
  auto enc_slots = route_slots<Real>(enc_components, {"role1", "role2", "filler"});
  if (capture) {
    auto v = enc_components.data();
    capture->enc.assign(v.begin(), v.end());
  }
  Tensor<Real> beta = sigmoid(params.beta_head(hidden_cat));
  state.f = tpr::write(state.f, enc_slots.at("role1"), enc_slots.at("role2"),
                       enc_slots.at("filler"), beta);

  // Decoder path: derive unbinding slots and read back through the memory.
  Tensor<Real> dec_components =
      make_initial_components(hidden_cat, params.dec_init, cfg.n_com_dec(), cfg.d_mem);
  if (cfg.use_aid)
    dec_components = aid_decompose(features, dec_components, *params.aid,
                                   cfg.aid_cfg(cfg.n_com_dec(), n_iter_override), train,
                                   dropout_rng);
  std::vector<std::string> dec_names{"n0"};
  for (int i = 1; i <= cfg.n_read; ++i) dec_names.push_back("e" + std::to_string(i));
  auto dec_slots = route_slots<Real>(dec_components, dec_names);
  if (capture) {
    auto v = dec_components.data();
    capture->dec.assign(v.begin(), v.end());
  }
  std::vector<Tensor<Real>> hops;
  for (int i = 1; i <= cfg.n_read; ++i) hops.push_back(dec_slots.at("e" + std::to_string(i)));
  Tensor<Real> memory = cfg.ablate_memory ? tpr::empty_memory<Real>(b, cfg.d_mem) : state.f;
  Tensor<Real> read_out = tpr::multihop_read(memory, dec_slots.at("n0"), hops);

  return params.readout(concat<Real>({hidden_cat, read_out}, 1));
}

#define AID_INSTANTIATE_MODEL(R)                                                                 \
  template struct ModelParams<R>;                                                                \
  template struct ModelState<R>;                                                                 \
  template std::vector<Tensor<R>> partition_transform(const Tensor<R>&, const Linear<R>&, int,   \
                                                      int);                                      \
  template LstmState<R> lstm_cell(const Tensor<R>&, const LstmState<R>&, const Linear<R>&);      \
  template std::vector<Tensor<R>> modular_lstm_step(const std::vector<Tensor<R>>&,               \
                                                    LstmState<R>&, const Linear<R>&);            \
  template Tensor<R> make_initial_components(const Tensor<R>&, const Linear<R>&, int, int);      \
  template Tensor<R> model_step(const Tensor<R>&, ModelState<R>&, const ModelParams<R>&,         \
                                const ModelConfig<R>&, bool, Rng*, StepCapture<R>*, int);

AID_INSTANTIATE_MODEL(float)
AID_INSTANTIATE_MODEL(double)

#undef AID_INSTANTIATE_MODEL

}  // namespace aid
