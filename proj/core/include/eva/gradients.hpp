#pragma once

#include <functional>

#include "eva/attention.hpp"
#include "eva/estimators.hpp"
#include "eva/mat.hpp"
#include "eva/partition.hpp"
#include "eva/random_features.hpp"

namespace eva {

/// Gradients of <upstream, estimator output> with respect to Q, K, V.
/// `max_rel_err_vs_fd` is filled by the finite-difference harness, not by the
/// backward passes themselves.
struct GradReport {
  Mat dQ;
  Mat dK;
  Mat dV;
  double max_rel_err_vs_fd = 0.0;
};

GradReport backward_softmax_attention(const AttentionInstance& inst, const Mat& upstream);

/// Backward pass of the practical estimator in its deterministic inference
/// configuration (deterministic-mean omegas, identity sigma). The chain runs
/// through the pooled summaries, the proposal centers, the xi weights of the
/// group coefficients, and the output ratio. Sampled mode is rejected: the
/// forward map is stochastic there and no gradient convention (reparameterized
/// or score-function) is committed to here.
GradReport backward_practical_eva(const AttentionInstance& inst, const PartitionSpec& partition,
                                  const RFConfig& cfg, const SigmaConfig& sigma,
                                  const Mat& upstream,
                                  ProposalCenter center = ProposalCenter::summary_sum);

/// Central finite differences of a scalar functional, entry by entry.
/// h must lie in [1e-7, 1e-3].
Mat finite_difference_grad(const std::function<double(const Mat&)>& f, const Mat& x, double h);

/// max_ij |a_ij - b_ij| / max(|a_ij|, floor).
double max_rel_error(const Mat& analytic, const Mat& reference, double floor = 1e-8);

}  // namespace eva
