// Word-level fast-weight-memory sequence model. Each step partitions the
// transformed input into sub-vectors, runs them through one shared-parameter
// LSTM cell, derives encoder/decoder component slots from the concatenated
// hidden state, refines them with the decomposition module (or uses the
// plain affine components in baseline mode), writes role1(x)role2 -> filler
// into the TPR memory and answers queries through multi-hop unbinding reads.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/linear.hpp"
#include "core/tensor.hpp"
#include "nn/aid_module.hpp"

namespace aid {

template <typename Real>
struct ModelConfig {
  int64_t vocab = 200;   // embedding rows (all word ids)
  int64_t y_vocab = 80;  // output classes
  int d_embed = 50;      // word embedding width
  int n_inputs = 3;
  int d_sub = 32;
  int d_lstm = 85;  // per-module LSTM width; n_inputs * d_lstm is the paper-scale 256 total
  int d_mem = 32;
  int n_read = 1;
  bool use_aid = true;
  bool ablate_memory = false;  // test hook: decoder reads from a zeroed memory

  // Decomposition settings shared by the encoder and decoder paths.
  int n_iter = 2;
  int d_mlp_update_hidden = 64;
  Real p_dropout = Real(0.5);
  Real eps_attn = Real(1e-8);
  bool use_query_residual = true;
  bool use_final_concat = true;
  AttnActivation attn_activation = AttnActivation::kEluPlusOne;

  int n_com_enc() const { return 3; }
  int n_com_dec() const { return 1 + n_read; }
  int input_width() const { return 2 * d_embed + 2; }  // x embed ++ y embed ++ 2 flags
  int d_hidden_cat() const { return n_inputs * d_lstm; }

  AidConfig<Real> aid_cfg(int n_com, int n_iter_override = -1) const {
    AidConfig<Real> c;
    c.n_com = n_com;
    c.n_iter = n_iter_override >= 0 ? n_iter_override : n_iter;
    c.n_inputs = n_inputs;
    c.d_inputs = d_lstm;
    c.d_com = d_mem;
    c.d_mlp_update_hidden = d_mlp_update_hidden;
    c.p_dropout = p_dropout;
    c.eps_attn = eps_attn;
    c.use_query_residual = use_query_residual;
    c.use_final_concat = use_final_concat;
    c.attn_activation = attn_activation;
    return c;
  }

  void validate() const {
    AID_CHECK(vocab > 0 && y_vocab > 0 && d_embed > 0, "ModelConfig: sizes must be positive");
    AID_CHECK(n_inputs > 0 && d_sub > 0 && d_lstm > 0 && d_mem > 0 && n_read > 0,
              "ModelConfig: dimensions must be positive");
    aid_cfg(n_com_enc()).validate();
  }
};

template <typename Real>
struct ModelParams {
  Tensor<Real> embedding;        // [vocab, d_embed]
  Linear<Real> input_transform;  // input_width -> n_inputs * d_sub
  Linear<Real> lstm;             // (d_sub + d_lstm) -> 4 * d_lstm, gates i,f,g,o
  Linear<Real> enc_init;         // hidden_cat -> n_com_enc * d_mem
  Linear<Real> dec_init;         // hidden_cat -> n_com_dec * d_mem
  Linear<Real> beta_head;        // hidden_cat -> 1
  Linear<Real> readout;          // hidden_cat + d_mem -> y_vocab
  std::optional<AidParams<Real>> aid;  // shared by encoder and decoder paths

  static ModelParams init(const ModelConfig<Real>& cfg, Rng rng);
  std::vector<std::pair<std::string, Tensor<Real>>> named() const;
  std::vector<Tensor<Real>> tensors() const;
  int64_t param_count() const;
  void zero_grad() const;
};

template <typename Real>
struct ModelState {
  Tensor<Real> h, c;  // [n_inputs * B, d_lstm], module-major rows
  Tensor<Real> f;     // [B, d_mem, d_mem, d_mem]

  static ModelState initial(const ModelConfig<Real>& cfg, int64_t batch);
};

// Per-step component capture for the analysis pipeline: refined components
// after routing, before any memory interaction. Row-major [B, n_com * d_mem].
template <typename Real>
struct StepCapture {
  std::vector<Real> enc;
  std::vector<Real> dec;
};

// ---- pieces of the step, exposed for direct testing ----

// Affine transform followed by the contiguous equal-width partition.
template <typename Real>
std::vector<Tensor<Real>> partition_transform(const Tensor<Real>& x, const Linear<Real>& transform,
                                              int n_inputs, int d_sub);

template <typename Real>
struct LstmState {
  Tensor<Real> h, c;
};

// One LSTM cell application; rows of x are processed independently.
template <typename Real>
LstmState<Real> lstm_cell(const Tensor<Real>& x, const LstmState<Real>& state,
                          const Linear<Real>& lin);

// Shared-parameter modular step: the same cell applied to each chunk with its
// own state slice. Returns per-module hidden states.
template <typename Real>
std::vector<Tensor<Real>> modular_lstm_step(const std::vector<Tensor<Real>>& chunks,
                                            LstmState<Real>& state, const Linear<Real>& lin);

// Affine map from the concatenated hidden state, reshaped row-major into
// [B, n_com, d_com] component rows.
template <typename Real>
Tensor<Real> make_initial_components(const Tensor<Real>& hidden_cat, const Linear<Real>& lin,
                                     int n_com, int d_com);

// ---- full step ----
// input: [B, 2*d_embed+2], the embedded item (y half zeroed on inference
// steps) with the two phase-flag channels appended. Returns logits
// [B, y_vocab]; state is advanced.
template <typename Real>
Tensor<Real> model_step(const Tensor<Real>& input, ModelState<Real>& state,
                        const ModelParams<Real>& params, const ModelConfig<Real>& cfg, bool train,
                        Rng* dropout_rng, StepCapture<Real>* capture = nullptr,
                        int n_iter_override = -1);

}  // namespace aid
