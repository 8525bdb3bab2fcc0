#include "train/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace aid {

YClassMap YClassMap::build(const WordSets& ws) {
  YClassMap m;
  m.word_of = ws.y_all();
  int32_t max_id = 0;
  for (int32_t id : m.word_of) max_id = std::max(max_id, id);
  for (int32_t id : ws.x_all()) max_id = std::max(max_id, id);
  m.class_of.assign(static_cast<size_t>(max_id) + 1, -1);
  for (size_t c = 0; c < m.word_of.size(); ++c)
    m.class_of[static_cast<size_t>(m.word_of[c])] = static_cast<int32_t>(c);
  return m;
}

namespace {

template <typename Real>
int32_t argmax_row(std::span<const Real> data, int64_t row, int64_t width) {
  const Real* p = data.data() + row * width;
  int32_t best = 0;
  for (int64_t j = 1; j < width; ++j)
    if (p[j] > p[best]) best = static_cast<int32_t>(j);
  return best;
}

}  // namespace

template <typename Real>
BatchStats<Real> run_episode_batch(const ModelParams<Real>& params, const ModelConfig<Real>& cfg,
                                   const std::vector<Episode>& episodes, const YClassMap& ymap,
                                   bool train, Rng* dropout_rng, bool compute_loss,
                                   int n_iter_override,
                                   std::vector<StepCapture<Real>>* captures) {
  int64_t b = static_cast<int64_t>(episodes.size());
  EncodedBatch<Real> enc = encode_episodes(episodes, params.embedding, cfg.d_embed);
  ModelState<Real> state = ModelState<Real>::initial(cfg, b);

  std::vector<Tensor<Real>> inference_logits;
  std::vector<int32_t> targets;
  BatchStats<Real> stats;
  if (captures) captures->resize(enc.steps.size());
  for (size_t t = 0; t < enc.steps.size(); ++t) {
    StepCapture<Real>* cap = captures ? &(*captures)[t] : nullptr;
    Tensor<Real> logits =
        model_step(enc.steps[t], state, params, cfg, train, dropout_rng, cap, n_iter_override);
    if (static_cast<int>(t) < enc.inference_start) continue;
    size_t qi = t - static_cast<size_t>(enc.inference_start);
    for (int64_t i = 0; i < b; ++i) {
      int32_t target_word = enc.target_ids[qi * static_cast<size_t>(b) + static_cast<size_t>(i)];
      int32_t target_class = ymap.class_of[static_cast<size_t>(target_word)];
      AID_CHECK(target_class >= 0, "run_episode_batch: target word is not a y word");
      targets.push_back(target_class);
      if (argmax_row(logits.data(), i, cfg.y_vocab) == target_class) stats.correct++;
      stats.total++;
    }
    inference_logits.push_back(logits);
  }
  if (compute_loss) {
    Tensor<Real> all = concat(inference_logits, 0);
    stats.loss = cross_entropy_with_logits(all, targets);
  }
  return stats;
}

template <typename Real>
double evaluate(const ModelParams<Real>& params, const ModelConfig<Real>& cfg, const WordSets& ws,
                const SarConfig& sar, const YClassMap& ymap, int n_episodes, Rng episode_stream,
                Split split, int n_iter_override, int batch) {
  int64_t correct = 0, total = 0;
  int done = 0;
  uint64_t index = 0;
  while (done < n_episodes) {
    int take = std::min(batch, n_episodes - done);
    std::vector<Episode> episodes;
    episodes.reserve(static_cast<size_t>(take));
    for (int i = 0; i < take; ++i)
      episodes.push_back(generate_episode(ws, sar, split, episode_stream.fork(index++)));
    BatchStats<Real> stats = run_episode_batch(params, cfg, episodes, ymap, /*train=*/false,
                                               nullptr, /*compute_loss=*/false, n_iter_override);
    correct += stats.correct;
    total += stats.total;
    done += take;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

template <typename Real>
TrainOutcome<Real> train_model(
    ModelParams<Real>& params, const ModelConfig<Real>& cfg, const WordSets& ws,
    const SarConfig& sar, const TrainConfig<Real>& tc, uint64_t seed,
    const std::function<void(const MetricsRow&, bool is_best)>& on_eval) {
  tc.validate();
  cfg.validate();
  YClassMap ymap = YClassMap::build(ws);

  std::vector<Tensor<Real>> tensors = params.tensors();
  AdamState<Real> opt;
  opt.lr = tc.lr;
  opt.beta1 = tc.beta1;
  opt.beta2 = tc.beta2;
  opt.eps_adam = tc.eps_adam;

  Rng root(seed);
  TrainOutcome<Real> out;
  double window_loss = 0;
  int64_t window_count = 0;

  for (int64_t iter = 1; iter <= tc.iters; ++iter) {
    std::vector<Episode> episodes;
    episodes.reserve(static_cast<size_t>(tc.batch));
    for (int i = 0; i < tc.batch; ++i)
      episodes.push_back(episode_at(ws, sar, Split::kTrain, seed,
                                    static_cast<uint64_t>(iter - 1) * tc.batch + i));
    Rng dropout_rng = root.fork("dropout").fork(static_cast<uint64_t>(iter));
    BatchStats<Real> stats = run_episode_batch(params, cfg, episodes, ymap, /*train=*/true,
                                               &dropout_rng, /*compute_loss=*/true);
    double loss = static_cast<double>(stats.loss.item());
    if (!std::isfinite(loss))
      throw DivergenceError("training diverged: non-finite loss at iteration " +
                            std::to_string(iter));
    params.zero_grad();
    stats.loss.backward(/*release_intermediate_grads=*/true);
    if (tc.grad_clip > Real(0)) clip_global_norm(tensors, tc.grad_clip);
    adam_step(tensors, opt);
    window_loss += loss;
    window_count++;

    if (iter % tc.eval_every == 0 || iter == tc.iters) {
      double acc = evaluate(params, cfg, ws, sar, ymap, tc.eval_episodes,
                            root.fork("eval").fork(static_cast<uint64_t>(iter)));
      MetricsRow row{iter, window_loss / static_cast<double>(window_count), acc};
      out.rows.push_back(row);
      window_loss = 0;
      window_count = 0;
      bool is_best = acc > out.best_eval_acc || out.rows.size() == 1;
      if (is_best) out.best_eval_acc = acc;
      out.final_eval_acc = acc;
      if (on_eval) on_eval(row, is_best);
    }
  }
  return out;
}

template <typename Real>
std::vector<TraceRecord> collect_traces(const ModelParams<Real>& params,
                                        const ModelConfig<Real>& cfg, const WordSets& ws,
                                        const SarConfig& sar, int n_episodes, Rng episode_stream,
                                        Split split, int n_iter_override, int batch) {
  YClassMap ymap = YClassMap::build(ws);
  std::vector<TraceRecord> traces;
  int done = 0;
  uint64_t index = 0;
  int enc_width = cfg.n_com_enc() * cfg.d_mem;
  int dec_width = cfg.n_com_dec() * cfg.d_mem;
  while (done < n_episodes) {
    int take = std::min(batch, n_episodes - done);
    std::vector<Episode> episodes;
    for (int i = 0; i < take; ++i)
      episodes.push_back(generate_episode(ws, sar, split, episode_stream.fork(index++)));
    std::vector<StepCapture<Real>> captures;
    run_episode_batch(params, cfg, episodes, ymap, /*train=*/false, nullptr,
                      /*compute_loss=*/false, n_iter_override, &captures);
    size_t n_pairs = episodes[0].discovery.size();
    for (size_t t = 0; t < captures.size(); ++t) {
      bool inference = t >= n_pairs;
      for (int i = 0; i < take; ++i) {
        const Episode& ep = episodes[static_cast<size_t>(i)];
        TraceRecord rec;
        rec.phase = inference ? 'i' : 'd';
        if (!inference) {
          rec.x = ep.discovery[t].first;
          rec.y = ep.discovery[t].second;
          const Real* src = captures[t].enc.data() + static_cast<int64_t>(i) * enc_width;
          rec.comps.assign(src, src + enc_width);
        } else {
          size_t qi = t - n_pairs;
          rec.x = ep.queries[qi];
          rec.y = ep.targets[qi];
          const Real* src = captures[t].dec.data() + static_cast<int64_t>(i) * dec_width;
          rec.comps.assign(src, src + dec_width);
        }
        traces.push_back(std::move(rec));
      }
    }
    done += take;
  }
  return traces;
}

template <typename Real>
uint64_t param_fingerprint(const ModelParams<Real>& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : params.tensors()) {
    for (Real v : t.data()) {
      uint64_t bits = 0;
      std::memcpy(&bits, &v, sizeof(Real));
      h ^= bits;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

#define AID_INSTANTIATE_TRAINER(R)                                                                \
  template struct TrainConfig<R>;                                                                 \
  template BatchStats<R> run_episode_batch(const ModelParams<R>&, const ModelConfig<R>&,          \
                                           const std::vector<Episode>&, const YClassMap&, bool,   \
                                           Rng*, bool, int, std::vector<StepCapture<R>>*);        \
  template double evaluate(const ModelParams<R>&, const ModelConfig<R>&, const WordSets&,         \
                           const SarConfig&, const YClassMap&, int, Rng, Split, int, int);        \
  template TrainOutcome<R> train_model(ModelParams<R>&, const ModelConfig<R>&, const WordSets&,   \
                                       const SarConfig&, const TrainConfig<R>&, uint64_t,         \
                                       const std::function<void(const MetricsRow&, bool)>&);      \
  template std::vector<TraceRecord> collect_traces(const ModelParams<R>&, const ModelConfig<R>&,  \
                                                   const WordSets&, const SarConfig&, int, Rng,   \
                                                   Split, int, int);                              \
  template uint64_t param_fingerprint(const ModelParams<R>&);

AID_INSTANTIATE_TRAINER(float)
AID_INSTANTIATE_TRAINER(double)

#undef AID_INSTANTIATE_TRAINER

}  // namespace aid
