#include "analysis/forest.hpp"

#include <algorithm>
#include <cmath>

#include "core/common.hpp"

namespace aid {

namespace {

struct SplitResult {
  int feature = -1;
  double threshold = 0;
  double gain = 0;
};

// Gini impurity from class counts: 1 - sum (c_i/n)^2.
double gini(const std::vector<int64_t>& counts, int64_t n) {
  if (n == 0) return 0;
  double ss = 0;
  for (int64_t c : counts) ss += static_cast<double>(c) * static_cast<double>(c);
  return 1.0 - ss / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace

void RandomForest::fit(const std::vector<double>& x, int64_t n, int d, const std::vector<int>& y,
                       int n_classes, const ForestConfig& cfg, uint64_t seed) {
  AID_CHECK(n > 0 && d > 0, "forest: empty dataset");
  AID_CHECK(static_cast<int64_t>(y.size()) == n, "forest: label count mismatch");
  AID_CHECK(n_classes >= 2, "forest: need at least two classes");
  d_ = d;
  n_classes_ = n_classes;
  trees_.assign(static_cast<size_t>(cfg.n_trees), {});
  gain_.assign(static_cast<size_t>(d), 0.0);

  int k_features = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
  Rng root(seed);

  std::vector<int> feature_pool(static_cast<size_t>(d));
  for (int j = 0; j < d; ++j) feature_pool[static_cast<size_t>(j)] = j;

  for (int ti = 0; ti < cfg.n_trees; ++ti) {
    Rng rng = root.fork("tree").fork(static_cast<uint64_t>(ti));
    Tree& tree = trees_[static_cast<size_t>(ti)];

    std::vector<int64_t> sample(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) sample[static_cast<size_t>(i)] = rng.uniform_int(n);

    // Iterative build; each frame owns its sample index range.
    struct Frame {
      std::vector<int64_t> idx;
      int depth;
      int node;
    };
    tree.nodes.emplace_back();
    std::vector<Frame> stack;
    stack.push_back({std::move(sample), 0, 0});

    std::vector<int64_t> counts(static_cast<size_t>(n_classes));
    std::vector<std::pair<double, int>> sorted;  // (value, label)
    while (!stack.empty()) {
      Frame frame = std::move(stack.back());
      stack.pop_back();
      int64_t m = static_cast<int64_t>(frame.idx.size());

      std::fill(counts.begin(), counts.end(), 0);
      for (int64_t i : frame.idx) counts[static_cast<size_t>(y[static_cast<size_t>(i)])]++;
      int majority = 0;
      for (int c = 1; c < n_classes; ++c)
        if (counts[static_cast<size_t>(c)] > counts[static_cast<size_t>(majority)]) majority = c;
      double node_gini = gini(counts, m);
      TreeNode& node = tree.nodes[static_cast<size_t>(frame.node)];
      node.label = majority;
      if (frame.depth >= cfg.max_depth || m < cfg.min_samples_split || node_gini == 0.0) continue;

      // Candidate features for this node.
      for (int j = 0; j < k_features; ++j) {
        int swap_with = j + static_cast<int>(rng.uniform_int(d - j));
        std::swap(feature_pool[static_cast<size_t>(j)], feature_pool[static_cast<size_t>(swap_with)]);
      }

      SplitResult best;
      for (int j = 0; j < k_features; ++j) {
        int f = feature_pool[static_cast<size_t>(j)];
        sorted.clear();
        for (int64_t i : frame.idx)
          sorted.emplace_back(x[static_cast<size_t>(i * d + f)], y[static_cast<size_t>(i)]);
        std::sort(sorted.begin(), sorted.end());
        if (sorted.front().first == sorted.back().first) continue;

        // Incremental class-count sums of squares on both sides.
        std::vector<int64_t> left(static_cast<size_t>(n_classes), 0);
        double ssl = 0;
        double ssr = 0;
        for (int64_t c : counts) ssr += static_cast<double>(c) * static_cast<double>(c);
        std::vector<int64_t> right = counts;
        for (int64_t i = 0; i + 1 < m; ++i) {
          int label = sorted[static_cast<size_t>(i)].second;
          int64_t cl = left[static_cast<size_t>(label)]++;
          int64_t cr = right[static_cast<size_t>(label)]--;
          ssl += static_cast<double>(2 * cl + 1);
          ssr -= static_cast<double>(2 * cr - 1);
          if (sorted[static_cast<size_t>(i)].first == sorted[static_cast<size_t>(i + 1)].first)
            continue;
          int64_t nl = i + 1, nr = m - nl;
          double gl = 1.0 - ssl / (static_cast<double>(nl) * static_cast<double>(nl));
          double gr = 1.0 - ssr / (static_cast<double>(nr) * static_cast<double>(nr));
          double weighted = (static_cast<double>(nl) * gl + static_cast<double>(nr) * gr) /
                            static_cast<double>(m);
          double gain = node_gini - weighted;
          if (gain > best.gain) {
            best.feature = f;
            best.threshold = 0.5 * (sorted[static_cast<size_t>(i)].first +
                                    sorted[static_cast<size_t>(i + 1)].first);
            best.gain = gain;
          }
        }
      }
      if (best.feature < 0) continue;

      std::vector<int64_t> lidx, ridx;
      for (int64_t i : frame.idx) {
        if (x[static_cast<size_t>(i * d + best.feature)] <= best.threshold)
          lidx.push_back(i);
        else
          ridx.push_back(i);
      }
      if (lidx.empty() || ridx.empty()) continue;

      gain_[static_cast<size_t>(best.feature)] +=
          best.gain * static_cast<double>(m) / static_cast<double>(n);
      int left_id = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      int right_id = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      TreeNode& parent = tree.nodes[static_cast<size_t>(frame.node)];
      parent.feature = best.feature;
      parent.threshold = best.threshold;
      parent.left = left_id;
      parent.right = right_id;
      stack.push_back({std::move(lidx), frame.depth + 1, left_id});
      stack.push_back({std::move(ridx), frame.depth + 1, right_id});
    }
  }
}

int RandomForest::tree_predict(const Tree& t, const double* row) const {
  int node = 0;
  while (t.nodes[static_cast<size_t>(node)].feature >= 0) {
    const TreeNode& n = t.nodes[static_cast<size_t>(node)];
    node = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  return t.nodes[static_cast<size_t>(node)].label;
}

int RandomForest::predict(const double* row) const {
  std::vector<int> votes(static_cast<size_t>(n_classes_), 0);
  for (const Tree& t : trees_) votes[static_cast<size_t>(tree_predict(t, row))]++;
  int best = 0;
  for (int c = 1; c < n_classes_; ++c)
    if (votes[static_cast<size_t>(c)] > votes[static_cast<size_t>(best)]) best = c;
  return best;
}

double RandomForest::accuracy(const std::vector<double>& x, int64_t n,
                              const std::vector<int>& y) const {
  if (n == 0) return 0;
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i)
    if (predict(x.data() + i * d_) == y[static_cast<size_t>(i)]) correct++;
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<double> RandomForest::importances() const {
  std::vector<double> out = gain_;
  double total = 0;
  for (double g : out) total += g;
  if (total > 0)
    for (double& g : out) g /= total;
  return out;
}

}  // namespace aid
