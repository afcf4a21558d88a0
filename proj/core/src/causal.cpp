#include "eva/causal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace eva {

namespace {

using clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - start).count();
}

void validate_causal(const AttentionInstance& inst, const PartitionSpec& partition) {
  if (inst.num_queries() != inst.num_keys()) {
    throw std::invalid_argument("causal_eva: requires decoder self-attention (N == M)");
  }
  if (partition.block_size == 0) {
    throw std::invalid_argument("causal_eva: needs an E block (K >= 1) so n is always visible");
  }
  if (partition.num_groups > 0 && !partition.groups_over_full_range) {
    throw std::invalid_argument("causal_eva: groups must be query-independent");
  }
  if (partition.num_keys != inst.num_keys() || partition.num_queries != inst.num_queries()) {
    throw std::invalid_argument("causal_eva: partition does not match the instance");
  }
}

}  // namespace

CausalMasks causal_masks(std::size_t k, std::size_t c) {
  if (k == 0) {
    throw std::invalid_argument("causal_masks: K must be >= 1");
  }
  CausalMasks masks;
  masks.intra_e = Mat(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) masks.intra_e(i, j) = (i <= j) ? 1.0 : 0.0;
  }
  masks.inter_p = Mat(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) masks.inter_p(i, j) = (i <= j) ? 1.0 : 0.0;
  }
  return masks;
}

EstimatorReport causal_eva_with_coefficients(const AttentionInstance& inst,
                                             const PartitionSpec& partition,
                                             const GroupSummary& summary,
                                             const GroupCoefficients& coefficients,
                                             const PracticalEvaOptions& options) {
  const auto start = clock::now();
  validate_causal(inst, partition);
  const std::size_t n_count = inst.num_queries();
  const std::size_t c_count = partition.num_groups;
  const std::size_t k_size = partition.block_size;
  const std::size_t d = inst.dim();
  const bool has_bias = !options.e_bias.empty();
  if (has_bias && (options.e_bias.rows != k_size || options.e_bias.cols != k_size)) {
    throw std::invalid_argument("causal_eva: e_bias must be K x K");
  }

  const CausalMasks masks = causal_masks(k_size, c_count);
  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const double root = std::sqrt(inst.logit_scale);
  Mat group_keys(c_count, d);
  for (std::size_t c = 0; c < c_count; ++c) {
    for (std::size_t j = 0; j < d; ++j) group_keys(c, j) = root * summary.k_tilde(c, j);
  }

  EstimatorReport report;
  report.output = Mat(n_count, d);
  report.z_estimates.resize(n_count);
  std::vector<double> e_logits(k_size);
  std::vector<double> g_logits(c_count);
  std::size_t visible_e_total = 0;
  for (std::size_t n = 0; n < n_count; ++n) {
    const auto [e_begin, e_end] = partition.e_range(n);

    // t: the most recent group lying entirely left of the block. Groups that
    // straddle the block boundary are masked whole.
    bool has_left_group = false;
    std::size_t t = 0;
    for (std::size_t c = 0; c < c_count; ++c) {
      if (partition.group_ranges[c].second <= e_begin) {
        has_left_group = true;
        t = c;
      }
    }

    double max_logit = -std::numeric_limits<double>::infinity();
    std::size_t visible_e = 0;
    for (std::size_t m = e_begin; m < e_end; ++m) {
      if (masks.intra_e(m - e_begin, n - e_begin) == 0.0) continue;
      double logit = dot(qs.row(n), ks.row(m));
      if (has_bias) logit += options.e_bias(m - e_begin, n - e_begin);
      e_logits[m - e_begin] = logit;
      max_logit = std::max(max_logit, logit);
      ++visible_e;
    }
    visible_e_total += visible_e;
    for (std::size_t c = 0; c < c_count; ++c) {
      if (!has_left_group || masks.inter_p(c, t) == 0.0) continue;
      g_logits[c] = dot(qs.row(n), group_keys.row(c));
      max_logit = std::max(max_logit, g_logits[c]);
    }

    double denom = 0.0;
    std::vector<double> numer(d, 0.0);
    for (std::size_t m = e_begin; m < e_end; ++m) {
      if (masks.intra_e(m - e_begin, n - e_begin) == 0.0) continue;
      const double w = std::exp(e_logits[m - e_begin] - max_logit);
      denom += w;
      for (std::size_t j = 0; j < d; ++j) numer[j] += w * inst.V(m, j);
    }
    for (std::size_t c = 0; c < c_count; ++c) {
      if (!has_left_group || masks.inter_p(c, t) == 0.0) continue;
      const double u = std::exp(g_logits[c] - max_logit);
      denom += u;
      for (std::size_t j = 0; j < d; ++j) numer[j] += u * coefficients.betas(c, j);
    }
    for (std::size_t j = 0; j < d; ++j) report.output(n, j) = numer[j] / denom;
    report.z_estimates[n] = std::exp(max_logit) * denom;
  }

  report.group_betas = coefficients.betas;
  report.omegas_used = coefficients.omegas;
  report.flop_estimate =
      cost::causal_eva_flops(n_count, inst.num_keys(), d, visible_e_total, c_count);
  report.wallclock_ns = elapsed_ns(start);
  return report;
}

EstimatorReport causal_eva(const AttentionInstance& inst, const PartitionSpec& partition,
                           const RFConfig& cfg, const SigmaConfig& sigma,
                           const PracticalEvaOptions& options) {
  const auto start = clock::now();
  validate_causal(inst, partition);
  GroupSummary summary;
  GroupCoefficients coefficients;
  if (partition.num_groups > 0) {
    summary = group_summaries(inst, partition, sigma);
    coefficients = group_coefficients(inst, partition, summary, cfg, options.center);
  }
  EstimatorReport report =
      causal_eva_with_coefficients(inst, partition, summary, coefficients, options);
  report.wallclock_ns = elapsed_ns(start);
  return report;
}

}  // namespace eva
