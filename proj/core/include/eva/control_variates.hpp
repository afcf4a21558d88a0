#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "eva/attention.hpp"
#include "eva/mat.hpp"
#include "eva/partition.hpp"
#include "eva/random_features.hpp"

namespace eva {

/// Per-key split of one query's SNIS numerator and denominator: the key m
/// contributes g_m (a d-vector, g_m == h_m * v_m identically) and h_m > 0.
/// Row sums reproduce the snis_estimate g and h for the same samples.
///
/// Terms are stored Z-free (scaled by the exact normalizer Z of the query
/// row); `log_z`, computed from the exact logits, restores absolute scale.
struct DecomposedTerms {
  Mat g_terms;                  // M x d
  std::vector<double> h_terms;  // M
  std::size_t query_index = 0;
  bool z_free = true;
  double log_z = 0.0;
};

/// One coefficient for the whole sequence.
struct GlobalScheme {
  std::vector<double> beta;  // d
};

/// One coefficient per partition group.
struct PerGroupScheme {
  Mat betas;  // C x d
  PartitionSpec partition;
};

/// One coefficient per key.
struct PerTokenScheme {
  Mat betas;  // M x d
};

using CoefficientScheme = std::variant<GlobalScheme, PerGroupScheme, PerTokenScheme>;

DecomposedTerms decompose(const AttentionInstance& inst, std::size_t query_index,
                          const RFSamples& samples);

/// Control variate estimate sum_m [g_m - beta_m h_m + beta_m E[h_m]] with the
/// coefficient resolved per key by the scheme and the stored Z-free terms
/// rescaled by 1/Z. `expected_h` must be expected_h_m for the same query.
std::vector<double> cv_estimate(const DecomposedTerms& terms, const CoefficientScheme& scheme,
                                const std::vector<double>& expected_h);

/// Closed-form E[h_m] = exp(scale q_n.k_m) / Z; identical to the softmax
/// attention probability row.
std::vector<double> expected_h_m(const AttentionInstance& inst, std::size_t query_index);

/// Variance-minimizing per-key coefficients: beta*_m = v_m.
Mat optimal_beta_per_token(const AttentionInstance& inst);

/// Variance-minimizing per-group coefficients: the softmax-weighted mean of
/// the group's value rows, weights renormalized within the group.
Mat optimal_beta_group(const AttentionInstance& inst, std::size_t query_index,
                       const std::vector<std::vector<std::size_t>>& groups);
Mat optimal_beta_group(const AttentionInstance& inst, std::size_t query_index,
                       const PartitionSpec& partition);

/// Weighted mean squared error of group coefficients against the per-key
/// optima, weighted by softmax probabilities restricted to U = union(groups).
double weighted_mse(const AttentionInstance& inst, std::size_t query_index,
                    const std::vector<std::vector<std::size_t>>& groups, const Mat& betas);
double weighted_mse(const AttentionInstance& inst, std::size_t query_index,
                    const PartitionSpec& partition, const Mat& betas);

/// Scores the weighted-group-mean coefficients beta_c = sum alpha_m v_m /
/// sum alpha_m against one shared coefficient, for arbitrary positive
/// normalized weights. J_grouped <= J_global always holds.
struct DominanceResult {
  double j_grouped = 0.0;
  double j_global = 0.0;
  Mat group_betas;  // C x d, the weighted group means
};

DominanceResult group_mean_dominance_check(const std::vector<std::vector<std::size_t>>& groups,
                                           const std::vector<double>& beta_global,
                                           const std::vector<double>& weights, const Mat& values);

}  // namespace eva
