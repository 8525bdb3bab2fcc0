// Small deterministic random forest classifier with Gini impurity
// importances, used as the factor predictor for the DCI metrics.
#pragma once

#include <cstdint>
#include <vector>

#include "core/rng.hpp"

namespace aid {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 12;
  int min_samples_split = 2;
};

class RandomForest {
 public:
  // X: row-major [n, d]. y: labels in [0, n_classes). Bootstrap per tree,
  // sqrt(d) feature candidates per node. Deterministic for a fixed seed.
  void fit(const std::vector<double>& x, int64_t n, int d, const std::vector<int>& y,
           int n_classes, const ForestConfig& cfg, uint64_t seed);

  int predict(const double* row) const;
  double accuracy(const std::vector<double>& x, int64_t n, const std::vector<int>& y) const;

  // Total impurity decrease per feature, normalized to sum 1 (all zeros if no
  // split ever improved purity).
  std::vector<double> importances() const;

 private:
  struct TreeNode {
    int feature = -1;       // -1 marks a leaf
    double threshold = 0;   // go left when value <= threshold
    int left = -1, right = -1;
    int label = 0;
  };
  struct Tree {
    std::vector<TreeNode> nodes;
  };

  int tree_predict(const Tree& t, const double* row) const;

  std::vector<Tree> trees_;
  std::vector<double> gain_;  // per-feature accumulated impurity decrease
  int d_ = 0;
  int n_classes_ = 0;
};

}  // namespace aid
