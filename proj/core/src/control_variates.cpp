#include "eva/control_variates.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eva/numerics.hpp"
#include "rf_terms.hpp"

namespace eva {

namespace {

std::vector<double> exact_logits_row(const AttentionInstance& inst, std::size_t query_index) {
  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  std::vector<double> logits(inst.num_keys());
  for (std::size_t m = 0; m < logits.size(); ++m) {
    logits[m] = dot(qs.row(query_index), ks.row(m));
  }
  return logits;
}

// Resolves the scheme into one beta row index per key: 0 for global, group id
// for per-group, m for per-token. Returns the beta matrix via out-param view.
struct ResolvedScheme {
  const Mat* betas = nullptr;
  std::vector<std::size_t> row_of_key;
};

ResolvedScheme resolve_scheme(const CoefficientScheme& scheme, std::size_t m_count,
                              std::size_t d, std::size_t query_index) {
  ResolvedScheme resolved;
  resolved.row_of_key.resize(m_count);
  if (const auto* global = std::get_if<GlobalScheme>(&scheme)) {
    if (global->beta.size() != d) {
      throw std::invalid_argument("cv_estimate: global beta dimension mismatch");
    }
    resolved.betas = nullptr;  // handled by caller via the vector
    return resolved;
  }
  if (const auto* grouped = std::get_if<PerGroupScheme>(&scheme)) {
    if (grouped->betas.cols != d || grouped->betas.rows != grouped->partition.num_groups) {
      throw std::invalid_argument("cv_estimate: per-group betas shape mismatch");
    }
    if (grouped->partition.num_keys != m_count) {
      throw std::invalid_argument("cv_estimate: partition key count mismatch");
    }
    const auto groups = grouped->partition.groups_for_query(query_index);
    std::vector<bool> covered(m_count, false);
    for (std::size_t c = 0; c < groups.size(); ++c) {
      for (std::size_t m : groups[c]) {
        resolved.row_of_key[m] = c;
        covered[m] = true;
      }
    }
    if (!std::all_of(covered.begin(), covered.end(), [](bool b) { return b; })) {
      throw std::invalid_argument("cv_estimate: per-group scheme does not cover every key");
    }
    resolved.betas = &grouped->betas;
    return resolved;
  }
  const auto& per_token = std::get<PerTokenScheme>(scheme);
  if (per_token.betas.cols != d || per_token.betas.rows != m_count) {
    throw std::invalid_argument("cv_estimate: per-token betas shape mismatch");
  }
  for (std::size_t m = 0; m < m_count; ++m) resolved.row_of_key[m] = m;
  resolved.betas = &per_token.betas;
  return resolved;
}

}  // namespace

DecomposedTerms decompose(const AttentionInstance& inst, std::size_t query_index,
                          const RFSamples& samples) {
  if (query_index >= inst.num_queries()) {
    throw std::invalid_argument("decompose: query index out of range");
  }
  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const detail::SampleKeyTable table = detail::build_sample_key_table(ks, samples);
  const std::vector<double> base = detail::query_sample_base(qs, query_index, samples, table);
  const double shift = detail::max_log_term(table, base);
  const double unshift = std::exp(shift);
  if (!std::isfinite(unshift)) {
    throw std::overflow_error("decompose: Z-free terms overflow f64");
  }

  const std::size_t s_count = samples.count();
  const std::size_t m_count = inst.num_keys();
  const std::size_t d = inst.dim();

  DecomposedTerms terms;
  terms.query_index = query_index;
  terms.h_terms.assign(m_count, 0.0);
  terms.g_terms = Mat(m_count, d);
  for (std::size_t m = 0; m < m_count; ++m) {
    double h_m = 0.0;
    for (std::size_t s = 0; s < s_count; ++s) {
      h_m += std::exp(detail::log_term(table, base, s, m) - shift);
    }
    h_m *= unshift;
    terms.h_terms[m] = h_m;
    // g_m = h_m v_m holds identically; store it as the product so the
    // relation survives in floating point.
    for (std::size_t j = 0; j < d; ++j) terms.g_terms(m, j) = h_m * inst.V(m, j);
  }
  terms.log_z = logsumexp(exact_logits_row(inst, query_index));
  return terms;
}

std::vector<double> cv_estimate(const DecomposedTerms& terms, const CoefficientScheme& scheme,
                                const std::vector<double>& expected_h) {
  const std::size_t m_count = terms.h_terms.size();
  const std::size_t d = terms.g_terms.cols;
  if (expected_h.size() != m_count) {
    throw std::invalid_argument("cv_estimate: expected_h length mismatch");
  }
  const ResolvedScheme resolved = resolve_scheme(scheme, m_count, d, terms.query_index);
  const double* global_beta = nullptr;
  if (const auto* global = std::get_if<GlobalScheme>(&scheme)) {
    global_beta = global->beta.data();
  }

  const double z = std::exp(terms.log_z);
  std::vector<double> out(d, 0.0);
  for (std::size_t m = 0; m < m_count; ++m) {
    const double h_m = terms.h_terms[m];
    const double eh = expected_h[m];
    const double* beta = global_beta ? global_beta : &resolved.betas->data[resolved.row_of_key[m] * d];
    for (std::size_t j = 0; j < d; ++j) {
      out[j] += (terms.g_terms(m, j) - beta[j] * h_m) / z + beta[j] * eh;
    }
  }
  return out;
}

std::vector<double> expected_h_m(const AttentionInstance& inst, std::size_t query_index) {
  return attention_weight_row(inst, query_index);
}

Mat optimal_beta_per_token(const AttentionInstance& inst) { return inst.V; }

Mat optimal_beta_group(const AttentionInstance& inst, std::size_t query_index,
                       const std::vector<std::vector<std::size_t>>& groups) {
  const std::vector<double> logits = exact_logits_row(inst, query_index);
  const std::size_t d = inst.dim();
  Mat betas(groups.size(), d);
  for (std::size_t c = 0; c < groups.size(); ++c) {
    const auto& members = groups[c];
    if (members.empty()) {
      throw std::invalid_argument("optimal_beta_group: empty group");
    }
    double max_logit = logits[members[0]];
    for (std::size_t m : members) max_logit = std::max(max_logit, logits[m]);
    double mass = 0.0;
    for (std::size_t m : members) {
      const double w = std::exp(logits[m] - max_logit);
      mass += w;
      for (std::size_t j = 0; j < d; ++j) betas(c, j) += w * inst.V(m, j);
    }
    for (std::size_t j = 0; j < d; ++j) betas(c, j) /= mass;
  }
  return betas;
}

Mat optimal_beta_group(const AttentionInstance& inst, std::size_t query_index,
                       const PartitionSpec& partition) {
  return optimal_beta_group(inst, query_index, partition.groups_for_query(query_index));
}

double weighted_mse(const AttentionInstance& inst, std::size_t query_index,
                    const std::vector<std::vector<std::size_t>>& groups, const Mat& betas) {
  if (betas.rows != groups.size() || betas.cols != inst.dim()) {
    throw std::invalid_argument("weighted_mse: betas shape mismatch");
  }
  const std::vector<double> logits = exact_logits_row(inst, query_index);
  std::vector<double> member_logits;
  std::vector<std::pair<std::size_t, std::size_t>> flat;  // (group, key)
  for (std::size_t c = 0; c < groups.size(); ++c) {
    for (std::size_t m : groups[c]) {
      member_logits.push_back(logits[m]);
      flat.emplace_back(c, m);
    }
  }
  if (flat.empty()) {
    throw std::invalid_argument("weighted_mse: empty index set");
  }
  const double log_mass = logsumexp(member_logits);
  double j_value = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto [c, m] = flat[i];
    const double weight = std::exp(member_logits[i] - log_mass);
    double sq = 0.0;
    for (std::size_t j = 0; j < inst.dim(); ++j) {
      const double diff = betas(c, j) - inst.V(m, j);
      sq += diff * diff;
    }
    j_value += weight * sq;
  }
  return j_value;
}

double weighted_mse(const AttentionInstance& inst, std::size_t query_index,
                    const PartitionSpec& partition, const Mat& betas) {
  return weighted_mse(inst, query_index, partition.groups_for_query(query_index), betas);
}

DominanceResult group_mean_dominance_check(const std::vector<std::vector<std::size_t>>& groups,
                                           const std::vector<double>& beta_global,
                                           const std::vector<double>& weights, const Mat& values) {
  const std::size_t d = values.cols;
  if (beta_global.size() != d) {
    throw std::invalid_argument("group_mean_dominance_check: beta dimension mismatch");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) {
      throw std::invalid_argument("group_mean_dominance_check: weights must be positive");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("group_mean_dominance_check: weights must sum to 1");
  }

  DominanceResult result;
  result.group_betas = Mat(groups.size(), d);
  for (std::size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].empty()) {
      throw std::invalid_argument("group_mean_dominance_check: empty group");
    }
    double mass = 0.0;
    for (std::size_t m : groups[c]) {
      if (m >= values.rows || m >= weights.size()) {
        throw std::invalid_argument("group_mean_dominance_check: index out of range");
      }
      mass += weights[m];
      for (std::size_t j = 0; j < d; ++j) result.group_betas(c, j) += weights[m] * values(m, j);
    }
    for (std::size_t j = 0; j < d; ++j) result.group_betas(c, j) /= mass;
  }

  for (std::size_t c = 0; c < groups.size(); ++c) {
    for (std::size_t m : groups[c]) {
      double sq_grouped = 0.0;
      double sq_global = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dg = result.group_betas(c, j) - values(m, j);
        const double db = beta_global[j] - values(m, j);
        sq_grouped += dg * dg;
        sq_global += db * db;
      }
      result.j_grouped += weights[m] * sq_grouped;
      result.j_global += weights[m] * sq_global;
    }
  }
  return result;
}

}  // namespace eva
