// Post-hoc representation analysis: block-level DCI scores over the encoder
// component blocks and cosine-similarity structure between roles and
// unbinding operators.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace aid {

// One recorded step. Discovery records carry the refined encoder components
// (role1 ++ role2 ++ filler); inference records carry the decoder components
// (n0 ++ e_1 ++ ... ++ e_nread). x/y are the generative factors of the step
// (for inference records, y is the ground-truth target of the query).
struct TraceRecord {
  char phase = 'd';  // 'd' discovery, 'i' inference
  int32_t x = -1;
  int32_t y = -1;
  std::vector<double> comps;
};

void write_trace_file(const std::string& path, const std::vector<TraceRecord>& traces);
std::vector<TraceRecord> read_trace_file(const std::string& path);

struct DciScores {
  double d = 0;
  double c = 0;
  double i = 0;
};

struct DciConfig {
  int n_trees = 100;
  int max_depth = 12;
  double train_fraction = 0.7;
};

// D and C from an explicit blocks-by-factors importance matrix, plus the
// held-out accuracy list for I. Exposed so the entropy aggregation can be
// validated on analytic matrices without fitting any predictor.
DciScores dci_from_importance(const std::vector<std::vector<double>>& importance,
                              const std::vector<double>& factor_accuracies);

// Block-level DCI over discovery-phase traces: one forest per factor (x, y)
// fit on the concatenated encoder components, per-feature impurity
// importances summed per block. Deterministic given seed.
DciScores dci_block(const std::vector<TraceRecord>& traces, int n_blocks, int block_width,
                    const DciConfig& cfg, uint64_t seed);

// M[i][j] = cos(a_i, b_j); zero vectors map to similarity 0.
std::vector<std::vector<double>> cosine_matrix(const std::vector<std::vector<double>>& a,
                                               const std::vector<std::vector<double>>& b);

struct OrthoSummary {
  double mean_offdiag_role_role = 0;
  double mean_diag_role_unbind = 0;
  double mean_offdiag_role_unbind = 0;
  int n_x = 0;        // distinct x values paired with the chosen y
  int32_t y_id = -1;  // the fixed y
};

struct OrthoMatrices {
  std::vector<int32_t> x_ids;  // row/column labels
  // Cosine matrices over distinct x: roles from the discovery phase against
  // themselves and against the matching unbinding vectors from the inference
  // phase (hop-matched: role1 vs n0, role2 vs e1).
  std::vector<std::vector<double>> role1_role1, role2_role2;
  std::vector<std::vector<double>> role1_n0, role2_e1;
};

// Varying-x, fixed-y comparison: picks the y with the most distinct x
// partners, averages component vectors per x, and summarizes how strongly
// same-x roles and unbinding operators align versus different-x pairs.
// Requires at least two distinct x sharing a y.
OrthoSummary orthogonality_report(const std::vector<TraceRecord>& traces, int d_com, int n_read,
                                  OrthoMatrices* matrices = nullptr);

void write_matrix_csv(const std::string& path, const std::vector<int32_t>& labels,
                      const std::vector<std::vector<double>>& m);

}  // namespace aid
