// Systematic associative recall episodes. Words are split into disjoint sets
// X1, X2, X3, Y1, Y2. Training pairs come from X1xY1, X2xY2 and X3x(Y1uY2);
// evaluation pairs come only from the combination X1xY2, which never occurs
// in training for p < 1. p = |X3| / (|X2|+|X3|) tunes how much combinatorial
// diversity training exposes.
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace aid {

enum class Split { kTrain, kEval };

struct SarSizes {
  int x1 = 60;
  int x23 = 60;  // split into X2/X3 by p
  int y1 = 40;
  int y2 = 40;
  int total() const { return x1 + x23 + y1 + y2; }
};

struct WordSets {
  std::vector<int32_t> x1, x2, x3, y1, y2;

  int32_t total_words() const;
  std::vector<int32_t> x_all() const;
  std::vector<int32_t> y_all() const;  // y1 then y2; defines the output class order
  bool in_x1(int32_t id) const;
  bool in_y2(int32_t id) const;

 private:
  friend WordSets build_word_sets(std::vector<int32_t> words, const SarSizes& sizes, double p,
                                  Rng rng);
  std::vector<uint8_t> membership_;  // 1..5 for x1,x2,x3,y1,y2 indexed by word id
};

// Deterministically shuffles the word list and assigns |X1|,|X2uX3|,|Y1|,|Y2|
// ids in order; X3 receives round(p * |X2uX3|) of the middle block.
WordSets build_word_sets(std::vector<int32_t> words, const SarSizes& sizes, double p, Rng rng);
WordSets build_word_sets(int total_words, const SarSizes& sizes, double p, Rng rng);

struct SarConfig {
  double p = 1.0;
  int n_pairs = 4;
  SarSizes sizes;
  int d_embed = 50;
};

struct Episode {
  std::vector<std::pair<int32_t, int32_t>> discovery;  // ordered (x, y) items
  std::vector<int32_t> queries;                        // x ids, a permutation of discovery
  std::vector<int32_t> targets;                        // paired y ids
  Split split_tag = Split::kTrain;
};

// Samples one episode. Within an episode the x ids are distinct, the y ids
// are distinct and queries cover every discovery pair exactly once in fresh
// random order. Train pairs draw a combination type uniformly from the legal
// pools with a non-empty X side; eval pairs draw from X1 x Y2 only.
Episode generate_episode(const WordSets& ws, const SarConfig& cfg, Split split, Rng rng);

// Stream addressing: the episode for (seed, split, index) is always the same.
Episode episode_at(const WordSets& ws, const SarConfig& cfg, Split split, uint64_t seed,
                   uint64_t index);

// Differentiable encoding of a same-length episode batch.
//   step t input: emb(x_t) ++ emb(y_t or zeros) ++ flags, width 2*d_embed+2
// Flags mark the first discovery step and the first inference step. Loss and
// accuracy are evaluated on the inference positions only.
template <typename Real>
struct EncodedBatch {
  std::vector<Tensor<Real>> steps;  // each [B, 2*d_embed+2]
  int inference_start = 0;          // step index of the first inference position
  std::vector<int32_t> target_ids;  // word ids, row-major [step-inference_start][b]
};

template <typename Real>
EncodedBatch<Real> encode_episodes(const std::vector<Episode>& episodes,
                                   const Tensor<Real>& embedding, int d_embed);

}  // namespace aid
