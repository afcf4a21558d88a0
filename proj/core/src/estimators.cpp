#include "eva/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "eva/numerics.hpp"
#include "eva/rng.hpp"
#include "eva/testing.hpp"
#include "rf_terms.hpp"

namespace eva {

namespace {

using clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - start).count();
}

Mat apply_sigma_rows(const Mat& pooled, const SigmaConfig& sigma) {
  if (sigma.mode == SigmaMode::identity) return pooled;
  const std::size_t d = pooled.cols;
  if (sigma.weights.rows != d || sigma.weights.cols != d) {
    throw std::invalid_argument("SigmaConfig: linear_layernorm weights must be d x d");
  }
  Mat out(pooled.rows, d);
  std::vector<double> projected(d);
  for (std::size_t r = 0; r < pooled.rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      projected[i] = dot(sigma.weights.row(i), pooled.row(r));
    }
    double mean = 0.0;
    for (double v : projected) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : projected) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    if (!(var > 0.0)) {
      throw std::domain_error("SigmaConfig: layer normalization of a constant vector");
    }
    const double inv_std = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < d; ++i) out(r, i) = (projected[i] - mean) * inv_std;
  }
  return out;
}

Mat pool_row_chunks(const Mat& source,
                    const std::vector<std::pair<std::size_t, std::size_t>>& chunks) {
  Mat pooled(chunks.size(), source.cols);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const auto [begin, end] = chunks[c];
    if (end <= begin) {
      throw std::invalid_argument("group_summaries: empty pooling chunk");
    }
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t j = 0; j < source.cols; ++j) pooled(c, j) += source(r, j);
    }
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (std::size_t j = 0; j < source.cols; ++j) pooled(c, j) *= inv;
  }
  return pooled;
}

// Proposal centers in scaled coordinates: the xi evaluations see
// sqrt(scale) * k, so the centers live in the same space.
Mat proposal_centers(const GroupSummary& summary, double logit_scale, ProposalCenter center) {
  const std::size_t c_count = summary.k_tilde.rows;
  const std::size_t d = summary.k_tilde.cols;
  const double root = std::sqrt(logit_scale);
  Mat mu(c_count, d);
  if (center == ProposalCenter::zero) return mu;
  for (std::size_t c = 0; c < c_count; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      mu(c, j) = root * summary.q_tilde(c, j);
      if (center == ProposalCenter::summary_sum) mu(c, j) += root * summary.k_tilde(c, j);
    }
  }
  return mu;
}

void require_query_independent_groups(const PartitionSpec& partition, const char* who) {
  if (partition.num_groups > 0 && !partition.groups_over_full_range) {
    throw std::invalid_argument(std::string(who) +
                                ": groups must be query-independent (groups_over_full_range)");
  }
}

std::size_t sum_e_sizes(const PartitionSpec& partition) {
  if (partition.block_size == 0) return 0;
  std::size_t total = 0;
  for (std::size_t n = 0; n < partition.num_queries; ++n) {
    const auto [begin, end] = partition.e_range(n);
    total += end - begin;
  }
  return total;
}

void validate_e_sets(const std::vector<std::vector<std::size_t>>& e_sets,
                     const AttentionInstance& inst) {
  if (e_sets.size() != inst.num_queries()) {
    throw std::invalid_argument("e_sets must have one entry per query");
  }
  for (const auto& set : e_sets) {
    for (std::size_t m : set) {
      if (m >= inst.num_keys()) {
        throw std::invalid_argument("e_sets index out of range");
      }
    }
  }
}

}  // namespace

GroupSummary group_summaries(const AttentionInstance& inst, const PartitionSpec& partition,
                             const SigmaConfig& sigma) {
  if (partition.num_groups == 0) {
    throw std::invalid_argument("group_summaries: partition has no groups");
  }
  require_query_independent_groups(partition, "group_summaries");
  if (partition.num_keys != inst.num_keys() || partition.num_queries != inst.num_queries()) {
    throw std::invalid_argument("group_summaries: partition does not match the instance");
  }
  if (partition.num_groups > inst.num_queries()) {
    throw std::invalid_argument("group_summaries: more groups than query rows to pool");
  }
  GroupSummary summary;
  summary.sigma = sigma;
  summary.k_tilde = apply_sigma_rows(pool_row_chunks(inst.K, partition.group_ranges), sigma);
  summary.q_tilde = apply_sigma_rows(
      pool_row_chunks(inst.Q, near_equal_chunks(inst.num_queries(), partition.num_groups)), sigma);
  return summary;
}

GroupCoefficients group_coefficients(const AttentionInstance& inst, const PartitionSpec& partition,
                                     const GroupSummary& summary, const RFConfig& cfg,
                                     ProposalCenter center) {
  if (partition.num_groups == 0) {
    throw std::invalid_argument("group_coefficients: partition has no groups");
  }
  require_query_independent_groups(partition, "group_coefficients");
  const std::size_t c_count = partition.num_groups;
  const std::size_t d = inst.dim();
  if (summary.k_tilde.rows != c_count || summary.k_tilde.cols != d) {
    throw std::invalid_argument("group_coefficients: summary shape mismatch");
  }

  const Mat ks = scaled_keys(inst);
  GroupCoefficients out;
  out.omegas = proposal_centers(summary, inst.logit_scale, center);
  if (cfg.mode == SampleMode::sample) {
    SeededRng rng(cfg.seed);
    for (std::size_t c = 0; c < c_count; ++c) {
      for (std::size_t j = 0; j < d; ++j) out.omegas(c, j) += rng.next_gaussian();
    }
  }

  out.betas = Mat(c_count, d);
  for (std::size_t c = 0; c < c_count; ++c) {
    const auto [begin, end] = partition.group_ranges[c];
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t m = begin; m < end; ++m) {
      max_log = std::max(max_log, log_xi(ks.row(m), out.omegas.row(c)));
    }
    double mass = 0.0;
    for (std::size_t m = begin; m < end; ++m) {
      const double w = std::exp(log_xi(ks.row(m), out.omegas.row(c)) - max_log);
      mass += w;
      for (std::size_t j = 0; j < d; ++j) out.betas(c, j) += w * inst.V(m, j);
    }
    for (std::size_t j = 0; j < d; ++j) out.betas(c, j) /= mass;
  }
  return out;
}

EstimatorReport practical_eva_with_coefficients(const AttentionInstance& inst,
                                                const PartitionSpec& partition,
                                                const GroupSummary& summary,
                                                const GroupCoefficients& coefficients,
                                                const PracticalEvaOptions& options) {
  const auto start = clock::now();
  require_query_independent_groups(partition, "practical_eva");
  const std::size_t n_count = inst.num_queries();
  const std::size_t m_count = inst.num_keys();
  const std::size_t c_count = partition.num_groups;
  const std::size_t k_size = partition.block_size;
  const std::size_t d = inst.dim();
  if (partition.num_keys != m_count || partition.num_queries != n_count) {
    throw std::invalid_argument("practical_eva: partition does not match the instance");
  }
  const bool has_bias = !options.e_bias.empty();
  if (has_bias && (options.e_bias.rows != k_size || options.e_bias.cols != k_size)) {
    throw std::invalid_argument("practical_eva: e_bias must be K x K");
  }

  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const double root = std::sqrt(inst.logit_scale);
  Mat group_keys(c_count, d);  // sqrt(scale) * k~_c, so group logits share the token scaling
  for (std::size_t c = 0; c < c_count; ++c) {
    for (std::size_t j = 0; j < d; ++j) group_keys(c, j) = root * summary.k_tilde(c, j);
  }

  const bool flip_groups = testing::active_fault() == testing::Fault::eva_group_sign_flip;

  EstimatorReport report;
  report.output = Mat(n_count, d);
  report.z_estimates.resize(n_count);
  std::vector<double> e_logits(k_size);
  std::vector<double> g_logits(c_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    const auto [e_begin, e_end] = partition.e_range(n);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t m = e_begin; m < e_end; ++m) {
      double logit = dot(qs.row(n), ks.row(m));
      if (has_bias) logit += options.e_bias(m - e_begin, n - e_begin);
      e_logits[m - e_begin] = logit;
      max_logit = std::max(max_logit, logit);
    }
    for (std::size_t c = 0; c < c_count; ++c) {
      g_logits[c] = dot(qs.row(n), group_keys.row(c));
      max_logit = std::max(max_logit, g_logits[c]);
    }

    double denom = 0.0;
    std::vector<double> numer(d, 0.0);
    for (std::size_t m = e_begin; m < e_end; ++m) {
      const double w = std::exp(e_logits[m - e_begin] - max_logit);
      denom += w;
      for (std::size_t j = 0; j < d; ++j) numer[j] += w * inst.V(m, j);
    }
    for (std::size_t c = 0; c < c_count; ++c) {
      const double u = std::exp(g_logits[c] - max_logit);
      denom += u;
      const double signed_u = flip_groups ? -u : u;
      for (std::size_t j = 0; j < d; ++j) numer[j] += signed_u * coefficients.betas(c, j);
    }
    for (std::size_t j = 0; j < d; ++j) report.output(n, j) = numer[j] / denom;
    report.z_estimates[n] = std::exp(max_logit) * denom;
  }

  report.group_betas = coefficients.betas;
  report.omegas_used = coefficients.omegas;
  report.flop_estimate =
      cost::practical_eva_flops(n_count, m_count, d, sum_e_sizes(partition), c_count);
  report.wallclock_ns = elapsed_ns(start);
  return report;
}

EstimatorReport practical_eva(const AttentionInstance& inst, const PartitionSpec& partition,
                              const RFConfig& cfg, const SigmaConfig& sigma,
                              const PracticalEvaOptions& options) {
  const auto start = clock::now();
  GroupSummary summary;
  GroupCoefficients coefficients;
  if (partition.num_groups > 0) {
    summary = group_summaries(inst, partition, sigma);
    coefficients = group_coefficients(inst, partition, summary, cfg, options.center);
  }
  EstimatorReport report =
      practical_eva_with_coefficients(inst, partition, summary, coefficients, options);
  report.wallclock_ns = elapsed_ns(start);
  return report;
}

EstimatorReport ideal_eva(const AttentionInstance& inst, const PartitionSpec& partition,
                          const RFConfig& cfg, const IdealEvaOptions& options) {
  const auto start = clock::now();
  const std::size_t n_count = inst.num_queries();
  const std::size_t m_count = inst.num_keys();
  const std::size_t c_count = partition.num_groups;
  const std::size_t d = inst.dim();
  if (partition.num_keys != m_count || partition.num_queries != n_count) {
    throw std::invalid_argument("ideal_eva: partition does not match the instance");
  }

  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);

  // Group coefficient machinery: a shared sample set for the ratio form, or
  // the query-independent single-sample coefficients.
  RFSamples samples;
  detail::SampleKeyTable table;
  GroupCoefficients fixed_coeffs;
  if (c_count > 0) {
    if (options.beta_kind == GroupBetaKind::sample_ratio) {
      samples = draw_samples(cfg, d);
      table = detail::build_sample_key_table(ks, samples);
    } else {
      const GroupSummary summary = group_summaries(inst, partition, options.sigma);
      fixed_coeffs = group_coefficients(inst, partition, summary, cfg, options.center);
    }
  }

  const bool fixed_groups = partition.groups_over_full_range || c_count == 0;
  const std::vector<std::vector<std::size_t>> shared_groups =
      c_count > 0 && fixed_groups ? partition.groups_for_query(0)
                                  : std::vector<std::vector<std::size_t>>{};

  EstimatorReport report;
  report.output = Mat(n_count, d);
  report.z_estimates.resize(n_count);
  std::vector<double> logits(m_count);
  std::vector<double> h_terms(m_count);
  Mat first_betas(c_count, d);

  for (std::size_t n = 0; n < n_count; ++n) {
    for (std::size_t m = 0; m < m_count; ++m) logits[m] = dot(qs.row(n), ks.row(m));
    const auto [e_begin, e_end] = partition.e_range(n);
    const std::vector<std::vector<std::size_t>> local_groups =
        fixed_groups ? std::vector<std::vector<std::size_t>>{} : partition.groups_for_query(n);
    const auto& groups = fixed_groups ? shared_groups : local_groups;

    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t m = e_begin; m < e_end; ++m) max_logit = std::max(max_logit, logits[m]);
    for (const auto& members : groups) {
      for (std::size_t m : members) max_logit = std::max(max_logit, logits[m]);
    }

    if (c_count > 0 && options.beta_kind == GroupBetaKind::sample_ratio) {
      const std::vector<double> base = detail::query_sample_base(qs, n, samples, table);
      const double shift = detail::max_log_term(table, base);
      for (std::size_t m = 0; m < m_count; ++m) {
        double acc = 0.0;
        for (std::size_t s = 0; s < samples.count(); ++s) {
          acc += std::exp(detail::log_term(table, base, s, m) - shift);
        }
        h_terms[m] = acc;
      }
    }

    double denom = 0.0;
    std::vector<double> numer(d, 0.0);
    for (std::size_t m = e_begin; m < e_end; ++m) {
      const double w = std::exp(logits[m] - max_logit);
      denom += w;
      for (std::size_t j = 0; j < d; ++j) numer[j] += w * inst.V(m, j);
    }
    for (std::size_t c = 0; c < groups.size(); ++c) {
      double group_mass = 0.0;
      for (std::size_t m : groups[c]) group_mass += std::exp(logits[m] - max_logit);
      std::vector<double> beta(d, 0.0);
      if (options.beta_kind == GroupBetaKind::sample_ratio) {
        double h_sum = 0.0;
        for (std::size_t m : groups[c]) {
          h_sum += h_terms[m];
          for (std::size_t j = 0; j < d; ++j) beta[j] += h_terms[m] * inst.V(m, j);
        }
        for (std::size_t j = 0; j < d; ++j) beta[j] /= h_sum;
      } else {
        for (std::size_t j = 0; j < d; ++j) beta[j] = fixed_coeffs.betas(c, j);
      }
      if (n == 0) {
        for (std::size_t j = 0; j < d; ++j) first_betas(c, j) = beta[j];
      }
      denom += group_mass;
      for (std::size_t j = 0; j < d; ++j) numer[j] += group_mass * beta[j];
    }
    for (std::size_t j = 0; j < d; ++j) report.output(n, j) = numer[j] / denom;
    report.z_estimates[n] = std::exp(max_logit) * denom;
  }

  report.group_betas = first_betas;
  report.omegas_used = options.beta_kind == GroupBetaKind::sample_ratio && c_count > 0
                           ? samples.omegas
                           : fixed_coeffs.omegas;
  report.flop_estimate = cost::ideal_eva_flops(n_count, m_count, d, cfg.samples, c_count);
  report.wallclock_ns = elapsed_ns(start);
  return report;
}

EstimatorReport scatterbrain(const AttentionInstance& inst,
                             const std::vector<std::vector<std::size_t>>& e_sets,
                             const RFConfig& cfg) {
  const auto start = clock::now();
  if (!cfg.proposal_mean.empty()) {
    throw std::invalid_argument("scatterbrain: proposal must be the standard normal");
  }
  validate_e_sets(e_sets, inst);

  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const RFSamples samples = draw_samples(cfg, inst.dim());
  const std::size_t n_count = inst.num_queries();
  const std::size_t m_count = inst.num_keys();
  const std::size_t s_count = samples.count();
  const std::size_t d = inst.dim();
  const double log_s = std::log(static_cast<double>(s_count));

  // Query/key sample tables for the feature-map terms.
  Mat wq(n_count, s_count);
  Mat wk(s_count, m_count);
  std::vector<double> q_sq(n_count);
  std::vector<double> k_sq(m_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    q_sq[n] = squared_norm(qs.row(n));
    for (std::size_t s = 0; s < s_count; ++s) wq(n, s) = dot(samples.omegas.row(s), qs.row(n));
  }
  for (std::size_t m = 0; m < m_count; ++m) {
    k_sq[m] = squared_norm(ks.row(m));
    for (std::size_t s = 0; s < s_count; ++s) wk(s, m) = dot(samples.omegas.row(s), ks.row(m));
  }

  EstimatorReport report;
  report.output = Mat(n_count, d);
  report.z_estimates.resize(n_count);
  std::vector<bool> in_support(m_count);
  std::vector<double> log_terms(m_count);
  std::vector<double> sample_terms(s_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    std::fill(in_support.begin(), in_support.end(), false);
    for (std::size_t m : e_sets[n]) in_support[m] = true;
    for (std::size_t m = 0; m < m_count; ++m) {
      if (in_support[m]) {
        log_terms[m] = dot(qs.row(n), ks.row(m));
      } else {
        for (std::size_t s = 0; s < s_count; ++s) {
          sample_terms[s] = wq(n, s) - 0.5 * q_sq[n] + wk(s, m) - 0.5 * k_sq[m];
        }
        log_terms[m] = logsumexp(sample_terms) - log_s;
      }
    }
    const double max_term = *std::max_element(log_terms.begin(), log_terms.end());
    double denom = 0.0;
    std::vector<double> numer(d, 0.0);
    for (std::size_t m = 0; m < m_count; ++m) {
      const double w = std::exp(log_terms[m] - max_term);
      denom += w;
      for (std::size_t j = 0; j < d; ++j) numer[j] += w * inst.V(m, j);
    }
    for (std::size_t j = 0; j < d; ++j) report.output(n, j) = numer[j] / denom;
    report.z_estimates[n] = std::exp(max_term) * denom;
  }

  report.omegas_used = samples.omegas;
  report.flop_estimate = cost::scatterbrain_flops(n_count, m_count, d, s_count);
  report.wallclock_ns = elapsed_ns(start);
  return report;
}

EstimatorReport eva_shared_cv(const AttentionInstance& inst,
                              const std::vector<std::vector<std::size_t>>& e_sets,
                              const RFConfig& cfg, const std::vector<double>& beta_shared) {
  const auto start = clock::now();
  if (!cfg.proposal_mean.empty()) {
    throw std::invalid_argument("eva_shared_cv: proposal must be the standard normal");
  }
  if (beta_shared.size() != inst.dim()) {
    throw std::invalid_argument("eva_shared_cv: beta dimension mismatch");
  }
  validate_e_sets(e_sets, inst);

  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const RFSamples samples = draw_samples(cfg, inst.dim());
  const std::size_t n_count = inst.num_queries();
  const std::size_t m_count = inst.num_keys();
  const std::size_t s_count = samples.count();
  const std::size_t d = inst.dim();
  const double inv_s = 1.0 / static_cast<double>(s_count);

  EstimatorReport report;
  report.output = Mat(n_count, d);
  report.z_estimates.resize(n_count);
  std::vector<bool> in_support(m_count);
  std::vector<double> exact_term(m_count, 0.0);
  std::vector<double> feature_term(m_count, 0.0);
  for (std::size_t n = 0; n < n_count; ++n) {
    std::fill(in_support.begin(), in_support.end(), false);
    for (std::size_t m : e_sets[n]) in_support[m] = true;

    double exact_mass = 0.0;
    double feature_mass = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
      if (in_support[m]) {
        exact_term[m] = std::exp(dot(qs.row(n), ks.row(m)));
        exact_mass += exact_term[m];
      } else {
        double acc = 0.0;
        for (std::size_t s = 0; s < s_count; ++s) {
          acc += std::exp(log_xi(qs.row(n), samples.omegas.row(s)) +
                          log_xi(ks.row(m), samples.omegas.row(s)));
        }
        feature_term[m] = acc * inv_s;
        feature_mass += feature_term[m];
      }
    }
    const double z_hat = exact_mass + feature_mass;

    // Term-by-term control variate form with the shared coefficient: exact
    // contributions inside E, g_m - beta h_m outside, plus beta times the
    // leftover expected-control mass. The beta terms cancel algebraically,
    // which is exactly what the equivalence tests check.
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t m = 0; m < m_count; ++m) {
        if (in_support[m]) {
          acc += exact_term[m] * inst.V(m, j) / z_hat;
        } else {
          acc += (feature_term[m] * inst.V(m, j) - beta_shared[j] * feature_term[m]) / z_hat;
        }
      }
      acc += beta_shared[j] * (feature_mass / z_hat);
      report.output(n, j) = acc;
    }
    report.z_estimates[n] = z_hat;
  }

  report.omegas_used = samples.omegas;
  report.flop_estimate = cost::scatterbrain_flops(n_count, m_count, d, s_count);
  report.wallclock_ns = elapsed_ns(start);
  return report;
}

std::vector<std::vector<std::size_t>> e_sets_from_partition(const PartitionSpec& partition) {
  std::vector<std::vector<std::size_t>> sets(partition.num_queries);
  if (partition.block_size == 0) return sets;
  for (std::size_t n = 0; n < partition.num_queries; ++n) {
    const auto [begin, end] = partition.e_range(n);
    sets[n].reserve(end - begin);
    for (std::size_t m = begin; m < end; ++m) sets[n].push_back(m);
  }
  return sets;
}

}  // namespace eva
