#pragma once

#include <cstddef>
#include <vector>

#include "eva/attention.hpp"
#include "eva/mat.hpp"
#include "eva/partition.hpp"
#include "eva/random_features.hpp"
#include "eva/report.hpp"

namespace eva {

enum class SigmaMode { identity, linear_layernorm };

/// The summary transform sigma(.). `linear_layernorm` applies the supplied
/// d x d linear map followed by layer normalization without affine terms;
/// there is no training loop here, so the weights are caller-provided.
struct SigmaConfig {
  SigmaMode mode = SigmaMode::identity;
  Mat weights;  // d x d, linear_layernorm only
};

/// Pooled per-group summaries of keys and queries (raw space, before logit
/// scaling): k~_c = sigma(mean of k_m over P_c), q~_c likewise over the c-th
/// near-equal chunk of the query rows.
struct GroupSummary {
  Mat k_tilde;  // C x d
  Mat q_tilde;  // C x d
  SigmaConfig sigma;
};

/// Center of the per-group proposal N(mu_c, I).
enum class ProposalCenter {
  summary_sum,    // mu_c = q~_c + k~_c (default)
  query_summary,  // mu_c = q~_c
  zero,
};

GroupSummary group_summaries(const AttentionInstance& inst, const PartitionSpec& partition,
                             const SigmaConfig& sigma = {});

/// Single-sample, query-independent group coefficients
/// beta_c = sum_m xi(k_m, w_c) v_m / sum_m xi(k_m, w_c), one omega per group
/// drawn from N(mu_c, I) (or set to mu_c in deterministic-mean mode).
/// cfg.samples and cfg.proposal_mean are ignored; cfg.seed and cfg.mode apply.
/// Each beta row is a convex combination of the group's value rows.
struct GroupCoefficients {
  Mat betas;   // C x d
  Mat omegas;  // C x d
};

GroupCoefficients group_coefficients(const AttentionInstance& inst, const PartitionSpec& partition,
                                     const GroupSummary& summary, const RFConfig& cfg,
                                     ProposalCenter center = ProposalCenter::summary_sum);

/// How ideal EVA forms its group coefficients.
enum class GroupBetaKind {
  sample_ratio,   // query-dependent ratio of decomposed term sums over cfg's shared samples
  single_sample,  // the query-independent group_coefficients form
};

struct IdealEvaOptions {
  GroupBetaKind beta_kind = GroupBetaKind::sample_ratio;
  SigmaConfig sigma;  // single_sample only
  ProposalCenter center = ProposalCenter::summary_sum;
};

/// Quadratic-time reference estimator: exact exponential sums weight the
/// exact per-key terms within E and the estimated group coefficients outside,
/// all normalized by the exact mass of the terms used.
EstimatorReport ideal_eva(const AttentionInstance& inst, const PartitionSpec& partition,
                          const RFConfig& cfg, const IdealEvaOptions& options = {});

struct PracticalEvaOptions {
  ProposalCenter center = ProposalCenter::summary_sum;
  /// Optional additive logit bias inside the E block, indexed
  /// (key offset, query offset) like the causal mask. Empty means zero.
  Mat e_bias;
};

/// Linear-time estimator: exact terms within the query's block, one surrogate
/// logit q.k~_c per group outside, normalized by the sum of both. Runs in
/// O(N (K + C) d) time and O((N + C) d) extra memory.
EstimatorReport practical_eva(const AttentionInstance& inst, const PartitionSpec& partition,
                              const RFConfig& cfg, const SigmaConfig& sigma = {},
                              const PracticalEvaOptions& options = {});

/// Same estimator with externally supplied group state; the verification
/// seam for coefficient-level tests.
EstimatorReport practical_eva_with_coefficients(const AttentionInstance& inst,
                                                const PartitionSpec& partition,
                                                const GroupSummary& summary,
                                                const GroupCoefficients& coefficients,
                                                const PracticalEvaOptions& options = {});

/// Sparse-plus-random-feature estimator: exact exponentials on the support
/// sets, feature-map kernel estimates elsewhere, jointly normalized.
/// Requires the standard-normal proposal.
EstimatorReport scatterbrain(const AttentionInstance& inst,
                             const std::vector<std::vector<std::size_t>>& e_sets,
                             const RFConfig& cfg);

/// Shared-coefficient control variate over the complement of E with the
/// normalizer estimated as sum_E exp + sum_notE phi.phi, transcribed term by
/// term. Collapses to scatterbrain() for every choice of beta; exists so that
/// equivalence is testable rather than assumed.
EstimatorReport eva_shared_cv(const AttentionInstance& inst,
                              const std::vector<std::vector<std::size_t>>& e_sets,
                              const RFConfig& cfg, const std::vector<double>& beta_shared);

/// Materializes each query's E block as an index list.
std::vector<std::vector<std::size_t>> e_sets_from_partition(const PartitionSpec& partition);

}  // namespace eva
