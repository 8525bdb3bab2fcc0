#include "sar/sar_task.hpp"

#include <algorithm>
#include <cmath>

namespace aid {

namespace {

constexpr uint8_t kX1 = 1, kX2 = 2, kX3 = 3, kY1 = 4, kY2 = 5;

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

int32_t WordSets::total_words() const {
  return static_cast<int32_t>(x1.size() + x2.size() + x3.size() + y1.size() + y2.size());
}

std::vector<int32_t> WordSets::x_all() const {
  std::vector<int32_t> out = x1;
  out.insert(out.end(), x2.begin(), x2.end());
  out.insert(out.end(), x3.begin(), x3.end());
  return out;
}

std::vector<int32_t> WordSets::y_all() const {
  std::vector<int32_t> out = y1;
  out.insert(out.end(), y2.begin(), y2.end());
  return out;
}

bool WordSets::in_x1(int32_t id) const {
  return id >= 0 && id < static_cast<int32_t>(membership_.size()) &&
         membership_[static_cast<size_t>(id)] == kX1;
}

bool WordSets::in_y2(int32_t id) const {
  return id >= 0 && id < static_cast<int32_t>(membership_.size()) &&
         membership_[static_cast<size_t>(id)] == kY2;
}

WordSets build_word_sets(std::vector<int32_t> words, const SarSizes& sizes, double p, Rng rng) {
  AID_CHECK(p >= 0.0 && p <= 1.0, "build_word_sets: p must be in [0,1]");
  AID_CHECK(sizes.x1 > 0 && sizes.y1 > 0 && sizes.y2 > 0 && sizes.x23 > 0,
            "build_word_sets: all set sizes must be positive");
  AID_CHECK(static_cast<int>(words.size()) == sizes.total(),
            "build_word_sets: " + std::to_string(words.size()) + " words for sizes totalling " +
                std::to_string(sizes.total()));
  shuffle_in_place(words, rng);

  int n_x3 = static_cast<int>(std::lround(p * sizes.x23));
  int n_x2 = sizes.x23 - n_x3;

  WordSets ws;
  auto take = [&words](std::vector<int32_t>& dst, int n, int& pos) {
    dst.assign(words.begin() + pos, words.begin() + pos + n);
    pos += n;
  };
  int pos = 0;
  take(ws.x1, sizes.x1, pos);
  take(ws.x2, n_x2, pos);
  take(ws.x3, n_x3, pos);
  take(ws.y1, sizes.y1, pos);
  take(ws.y2, sizes.y2, pos);

  int32_t max_id = *std::max_element(words.begin(), words.end());
  ws.membership_.assign(static_cast<size_t>(max_id) + 1, 0);
  for (int32_t id : ws.x1) ws.membership_[static_cast<size_t>(id)] = kX1;
  for (int32_t id : ws.x2) ws.membership_[static_cast<size_t>(id)] = kX2;
  for (int32_t id : ws.x3) ws.membership_[static_cast<size_t>(id)] = kX3;
  for (int32_t id : ws.y1) ws.membership_[static_cast<size_t>(id)] = kY1;
  for (int32_t id : ws.y2) ws.membership_[static_cast<size_t>(id)] = kY2;
  return ws;
}

WordSets build_word_sets(int total_words, const SarSizes& sizes, double p, Rng rng) {
  std::vector<int32_t> words(static_cast<size_t>(total_words));
  for (int i = 0; i < total_words; ++i) words[static_cast<size_t>(i)] = i;
  return build_word_sets(std::move(words), sizes, p, rng);
}

Episode generate_episode(const WordSets& ws, const SarConfig& cfg, Split split, Rng rng) {
  AID_CHECK(cfg.n_pairs > 0, "generate_episode: n_pairs must be positive");

  // Combination pools: x candidates and the paired y candidates.
  struct Pool {
    const std::vector<int32_t>* xs;
    std::vector<int32_t> ys;
  };
  std::vector<Pool> pools;
  std::vector<int32_t> y_full;
  if (split == Split::kEval) {
    pools.push_back({&ws.x1, ws.y2});
  } else {
    pools.push_back({&ws.x1, ws.y1});
    if (!ws.x2.empty()) pools.push_back({&ws.x2, ws.y2});
    if (!ws.x3.empty()) {
      y_full = ws.y_all();
      pools.push_back({&ws.x3, y_full});
    }
  }
  for (const auto& pool : pools)
    AID_CHECK(!pool.xs->empty() && !pool.ys.empty(), "generate_episode: empty combination pool");

  Episode ep;
  ep.split_tag = split;
  std::vector<int32_t> used_x, used_y;
  auto unused = [](const std::vector<int32_t>& used, int32_t id) {
    return std::find(used.begin(), used.end(), id) == used.end();
  };
  for (int i = 0; i < cfg.n_pairs; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const Pool& pool = pools[static_cast<size_t>(rng.uniform_int(
          static_cast<int64_t>(pools.size())))];
      int32_t x = (*pool.xs)[static_cast<size_t>(rng.uniform_int(
          static_cast<int64_t>(pool.xs->size())))];
      int32_t y = pool.ys[static_cast<size_t>(rng.uniform_int(
          static_cast<int64_t>(pool.ys.size())))];
      if (!unused(used_x, x) || !unused(used_y, y)) continue;
      used_x.push_back(x);
      used_y.push_back(y);
      ep.discovery.emplace_back(x, y);
      placed = true;
    }
    AID_CHECK(placed, "generate_episode: insufficient vocabulary for " +
                          std::to_string(cfg.n_pairs) + " distinct pairs");
  }

  // Queries cover every discovery pair exactly once, in fresh random order.
  std::vector<size_t> order(ep.discovery.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_in_place(order, rng);
  for (size_t i : order) {
    ep.queries.push_back(ep.discovery[i].first);
    ep.targets.push_back(ep.discovery[i].second);
  }
  return ep;
}

Episode episode_at(const WordSets& ws, const SarConfig& cfg, Split split, uint64_t seed,
                   uint64_t index) {
  Rng rng = Rng(seed)
                .fork(split == Split::kTrain ? "episodes/train" : "episodes/eval")
                .fork(index);
  return generate_episode(ws, cfg, split, rng);
}

template <typename Real>
EncodedBatch<Real> encode_episodes(const std::vector<Episode>& episodes,
                                   const Tensor<Real>& embedding, int d_embed) {
  AID_CHECK(!episodes.empty(), "encode_episodes: empty batch");
  AID_CHECK(embedding.rank() == 2 && embedding.dim(1) == d_embed,
            "encode_episodes: embedding table must be [V, d_embed]");
  size_t n_pairs = episodes[0].discovery.size();
  for (const auto& ep : episodes) {
    AID_CHECK(ep.discovery.size() == n_pairs && ep.queries.size() == n_pairs,
              "encode_episodes: episodes must have equal length");
  }
  int64_t b = static_cast<int64_t>(episodes.size());
  int64_t steps = 2 * static_cast<int64_t>(n_pairs);

  EncodedBatch<Real> out;
  out.inference_start = static_cast<int>(n_pairs);
  Tensor<Real> zero_y = Tensor<Real>::zeros({b, d_embed});

  for (int64_t t = 0; t < steps; ++t) {
    bool inference = t >= static_cast<int64_t>(n_pairs);
    std::vector<int32_t> x_ids(static_cast<size_t>(b));
    std::vector<int32_t> y_ids(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
      const Episode& ep = episodes[static_cast<size_t>(i)];
      if (!inference) {
        x_ids[static_cast<size_t>(i)] = ep.discovery[static_cast<size_t>(t)].first;
        y_ids[static_cast<size_t>(i)] = ep.discovery[static_cast<size_t>(t)].second;
      } else {
        size_t qi = static_cast<size_t>(t) - n_pairs;
        x_ids[static_cast<size_t>(i)] = ep.queries[qi];
      }
    }
    Tensor<Real> ex = embedding_lookup(embedding, x_ids);
    Tensor<Real> ey = inference ? zero_y : embedding_lookup(embedding, y_ids);
    Tensor<Real> flags = Tensor<Real>::zeros({b, 2});
    if (t == 0)
      for (int64_t i = 0; i < b; ++i) flags.raw_data()[static_cast<size_t>(2 * i)] = Real(1);
    if (t == static_cast<int64_t>(n_pairs))
      for (int64_t i = 0; i < b; ++i) flags.raw_data()[static_cast<size_t>(2 * i + 1)] = Real(1);
    out.steps.push_back(concat<Real>({ex, ey, flags}, 1));
    if (inference) {
      for (int64_t i = 0; i < b; ++i) {
        size_t qi = static_cast<size_t>(t) - n_pairs;
        out.target_ids.push_back(episodes[static_cast<size_t>(i)].targets[qi]);
      }
    }
  }
  return out;
}

template struct EncodedBatch<float>;
template struct EncodedBatch<double>;
template EncodedBatch<float> encode_episodes(const std::vector<Episode>&, const Tensor<float>&, int);
template EncodedBatch<double> encode_episodes(const std::vector<Episode>&, const Tensor<double>&,
                                              int);

}  // namespace aid
