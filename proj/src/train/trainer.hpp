// Training and evaluation loops: fresh episode batches every iteration,
// cross-entropy on the inference positions only, Adam updates, periodic
// evaluation on the unseen-combination split.
#pragma once

#include <functional>
#include <vector>

#include "analysis/analysis.hpp"
#include "core/adam.hpp"
#include "nn/fwm_model.hpp"
#include "sar/sar_task.hpp"

namespace aid {

class DivergenceError : public Error {
 public:
  using Error::Error;
};

template <typename Real>
struct TrainConfig {
  int batch = 32;
  int64_t iters = 10000;
  int eval_every = 500;
  int eval_episodes = 200;
  Real lr = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.98);
  Real eps_adam = Real(1e-8);
  Real grad_clip = Real(0);  // 0 disables clipping

  void validate() const {
    AID_CHECK(batch > 0 && iters > 0 && eval_every > 0 && eval_episodes > 0,
              "TrainConfig: counts must be positive");
    AID_CHECK(lr > Real(0), "TrainConfig: lr must be positive");
    AID_CHECK(iters >= eval_every, "TrainConfig: iters must be >= eval_every");
  }
};

// Output classes are the y words, in y1-then-y2 order.
struct YClassMap {
  std::vector<int32_t> class_of;  // indexed by word id; -1 for non-y words
  std::vector<int32_t> word_of;   // class index -> word id

  static YClassMap build(const WordSets& ws);
};

struct MetricsRow {
  int64_t iter = 0;
  double train_loss = 0;  // mean loss since the previous eval point
  double eval_acc = 0;
};

template <typename Real>
struct BatchStats {
  Tensor<Real> loss;  // defined only when requested
  int64_t correct = 0;
  int64_t total = 0;
};

// Runs one batch of same-length episodes through the model. Correctness is
// argmax over logits at each inference position.
template <typename Real>
BatchStats<Real> run_episode_batch(const ModelParams<Real>& params, const ModelConfig<Real>& cfg,
                                   const std::vector<Episode>& episodes, const YClassMap& ymap,
                                   bool train, Rng* dropout_rng, bool compute_loss,
                                   int n_iter_override = -1,
                                   std::vector<StepCapture<Real>>* captures = nullptr);

// Accuracy over freshly generated episodes (dropout off, no parameter
// updates). episode_stream seeds the episode draw.
template <typename Real>
double evaluate(const ModelParams<Real>& params, const ModelConfig<Real>& cfg, const WordSets& ws,
                const SarConfig& sar, const YClassMap& ymap, int n_episodes, Rng episode_stream,
                Split split = Split::kEval, int n_iter_override = -1, int batch = 32);

template <typename Real>
struct TrainOutcome {
  std::vector<MetricsRow> rows;
  double final_eval_acc = 0;
  double best_eval_acc = 0;
};

// Full training run, deterministic given (seed, configs). on_eval fires at
// every eval point, after metrics are computed; is_best marks a new best
// evaluation accuracy (checkpointing hook).
template <typename Real>
TrainOutcome<Real> train_model(
    ModelParams<Real>& params, const ModelConfig<Real>& cfg, const WordSets& ws,
    const SarConfig& sar, const TrainConfig<Real>& tc, uint64_t seed,
    const std::function<void(const MetricsRow&, bool is_best)>& on_eval = {});

// Records routed component vectors with their generative factors over
// freshly generated episodes; consumed by the analysis module.
template <typename Real>
std::vector<TraceRecord> collect_traces(const ModelParams<Real>& params,
                                        const ModelConfig<Real>& cfg, const WordSets& ws,
                                        const SarConfig& sar, int n_episodes, Rng episode_stream,
                                        Split split = Split::kEval, int n_iter_override = -1,
                                        int batch = 32);

// Order-sensitive digest of all parameter values; eval must not change it.
template <typename Real>
uint64_t param_fingerprint(const ModelParams<Real>& params);

}  // namespace aid
