#pragma once

#include "eva/estimators.hpp"

namespace eva {

/// The two triangular indicator matrices of the autoregressive estimator.
/// `intra_e(i, j) = 1 iff i <= j` masks within the block, indexed
/// (key offset, query offset); one matrix is shared by every block via
/// position shifting. `inter_p(c, t) = 1 iff c <= t` admits a whole group
/// only when it lies entirely left of the query's block.
struct CausalMasks {
  Mat intra_e;  // K x K
  Mat inter_p;  // C x C
};

CausalMasks causal_masks(std::size_t k, std::size_t c);

/// Autoregressive variant of the practical estimator for decoder
/// self-attention (N == M). Query n sees the keys of its own block up to
/// position n and every group lying entirely left of the block; groups that
/// overlap the block or sit right of it are masked out whole. Group
/// summaries and coefficients are computed once over full groups.
EstimatorReport causal_eva(const AttentionInstance& inst, const PartitionSpec& partition,
                           const RFConfig& cfg, const SigmaConfig& sigma = {},
                           const PracticalEvaOptions& options = {});

/// Same with externally supplied group state (the masking test seam).
EstimatorReport causal_eva_with_coefficients(const AttentionInstance& inst,
                                             const PartitionSpec& partition,
                                             const GroupSummary& summary,
                                             const GroupCoefficients& coefficients,
                                             const PracticalEvaOptions& options = {});

}  // namespace eva
