#include "eva/random_features.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "eva/rng.hpp"
#include "rf_terms.hpp"

namespace eva {

namespace {

void validate_config(const RFConfig& cfg, std::size_t dim) {
  if (cfg.samples == 0) {
    throw std::invalid_argument("RFConfig: sample count must be >= 1");
  }
  if (!cfg.proposal_mean.empty()) {
    if (cfg.proposal_mean.cols != dim) {
      throw std::invalid_argument("RFConfig: proposal mean dimension mismatch");
    }
    if (cfg.proposal_mean.rows != 1 && cfg.proposal_mean.rows != cfg.samples) {
      throw std::invalid_argument("RFConfig: proposal mean must have 1 or S rows");
    }
    if (!cfg.proposal_mean.all_finite()) {
      throw std::invalid_argument("RFConfig: proposal mean has non-finite entries");
    }
  }
}

}  // namespace

RFSamples draw_samples(const RFConfig& cfg, std::size_t dim) {
  validate_config(cfg, dim);
  const std::size_t s_count = cfg.samples;
  const bool shifted = !cfg.proposal_mean.empty();

  RFSamples out;
  out.omegas = Mat(s_count, dim);
  out.log_normal.resize(s_count);
  out.log_proposal.resize(s_count);

  SeededRng rng(cfg.seed);
  for (std::size_t s = 0; s < s_count; ++s) {
    const std::size_t mean_row = (shifted && cfg.proposal_mean.rows > 1) ? s : 0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double mu = shifted ? cfg.proposal_mean(mean_row, j) : 0.0;
      const double z = (cfg.mode == SampleMode::sample) ? rng.next_gaussian() : 0.0;
      out.omegas(s, j) = mu + z;
    }
    double w_sq = 0.0;
    double centered_sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double w = out.omegas(s, j);
      const double mu = shifted ? cfg.proposal_mean(mean_row, j) : 0.0;
      w_sq += w * w;
      centered_sq += (w - mu) * (w - mu);
    }
    out.log_normal[s] = -0.5 * w_sq;
    out.log_proposal[s] = -0.5 * centered_sq;
  }
  return out;
}

double log_xi(std::span<const double> x, std::span<const double> omega) {
  if (x.size() != omega.size()) {
    throw std::invalid_argument("log_xi: dimension mismatch");
  }
  return dot(omega, x) - 0.5 * squared_norm(x);
}

Mat feature_map(const Mat& x, const RFSamples& samples) {
  if (x.cols != samples.omegas.cols) {
    throw std::invalid_argument("feature_map: dimension mismatch");
  }
  const std::size_t s_count = samples.count();
  const double inv_sqrt_s = 1.0 / std::sqrt(static_cast<double>(s_count));
  Mat out(x.rows, s_count);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t s = 0; s < s_count; ++s) {
      const double lx = log_xi(x.row(i), samples.omegas.row(s));
      if (lx > 700.0) {
        throw std::overflow_error("feature_map: log xi exceeds 700, exp would overflow");
      }
      out(i, s) = std::exp(lx) * inv_sqrt_s;
    }
  }
  return out;
}

namespace detail {

SampleKeyTable build_sample_key_table(const Mat& scaled_keys, const RFSamples& samples) {
  const std::size_t s_count = samples.count();
  const std::size_t m_count = scaled_keys.rows;
  SampleKeyTable table;
  table.wk = Mat(s_count, m_count);
  table.key_sq.resize(m_count);
  table.log_alpha.resize(s_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    table.key_sq[m] = squared_norm(scaled_keys.row(m));
  }
  const double log_s = std::log(static_cast<double>(s_count));
  for (std::size_t s = 0; s < s_count; ++s) {
    table.log_alpha[s] = -log_s + samples.log_weight(s);
    for (std::size_t m = 0; m < m_count; ++m) {
      table.wk(s, m) = dot(samples.omegas.row(s), scaled_keys.row(m));
    }
  }
  return table;
}

std::vector<double> query_sample_base(const Mat& scaled_queries, std::size_t query_index,
                                      const RFSamples& samples, const SampleKeyTable& table) {
  const std::size_t s_count = samples.count();
  std::vector<double> base(s_count);
  const auto q_row = scaled_queries.row(query_index);
  for (std::size_t s = 0; s < s_count; ++s) {
    base[s] = table.log_alpha[s] + log_xi(q_row, samples.omegas.row(s));
  }
  return base;
}

double max_log_term(const SampleKeyTable& table, const std::vector<double>& base) {
  double best = -std::numeric_limits<double>::infinity();
  const std::size_t m_count = table.key_sq.size();
  for (std::size_t s = 0; s < base.size(); ++s) {
    for (std::size_t m = 0; m < m_count; ++m) {
      const double t = log_term(table, base, s, m);
      if (t > best) best = t;
    }
  }
  return best;
}

}  // namespace detail

SnisResult snis_estimate(const AttentionInstance& inst, std::size_t query_index, const RFConfig& cfg) {
  if (query_index >= inst.num_queries()) {
    throw std::invalid_argument("snis_estimate: query index out of range");
  }
  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const RFSamples samples = draw_samples(cfg, inst.dim());
  const detail::SampleKeyTable table = detail::build_sample_key_table(ks, samples);
  const std::vector<double> base = detail::query_sample_base(qs, query_index, samples, table);
  const double shift = detail::max_log_term(table, base);

  const std::size_t s_count = samples.count();
  const std::size_t m_count = inst.num_keys();
  const std::size_t d = inst.dim();

  SnisResult result;
  result.g.assign(d, 0.0);
  double h_acc = 0.0;
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t m = 0; m < m_count; ++m) {
      const double term = std::exp(detail::log_term(table, base, s, m) - shift);
      h_acc += term;
      for (std::size_t j = 0; j < d; ++j) result.g[j] += term * inst.V(m, j);
    }
  }
  if (!(h_acc > 0.0)) {
    throw std::overflow_error("snis_estimate: denominator underflow");
  }
  result.value.resize(d);
  for (std::size_t j = 0; j < d; ++j) result.value[j] = result.g[j] / h_acc;

  // Undo the stabilization shift so g, h carry only the Z-free convention.
  const double unshift = std::exp(shift);
  if (!std::isfinite(unshift)) {
    throw std::overflow_error("snis_estimate: Z-free terms overflow f64");
  }
  for (double& v : result.g) v *= unshift;
  result.h = h_acc * unshift;
  return result;
}

EstimatorReport performer_attention(const AttentionInstance& inst, const RFConfig& cfg) {
  if (!cfg.proposal_mean.empty()) {
    throw std::invalid_argument("performer_attention: proposal must be the standard normal");
  }
  const auto start = std::chrono::steady_clock::now();

  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const RFSamples samples = draw_samples(cfg, inst.dim());
  const Mat phi_q = feature_map(qs, samples);
  const Mat phi_k = feature_map(ks, samples);

  const std::size_t n_count = inst.num_queries();
  const std::size_t m_count = inst.num_keys();
  const std::size_t s_count = samples.count();
  const std::size_t d = inst.dim();

  // kv_summary = sum_m phi(k_m) v_m^T  (S x d); key_mass = sum_m phi(k_m).
  Mat kv_summary(s_count, d);
  std::vector<double> key_mass(s_count, 0.0);
  for (std::size_t m = 0; m < m_count; ++m) {
    for (std::size_t s = 0; s < s_count; ++s) {
      const double f = phi_k(m, s);
      key_mass[s] += f;
      for (std::size_t j = 0; j < d; ++j) kv_summary(s, j) += f * inst.V(m, j);
    }
  }

  EstimatorReport report;
  report.output = Mat(n_count, d);
  report.z_estimates.resize(n_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    double denom = 0.0;
    std::vector<double> numer(d, 0.0);
    for (std::size_t s = 0; s < s_count; ++s) {
      const double f = phi_q(n, s);
      denom += f * key_mass[s];
      for (std::size_t j = 0; j < d; ++j) numer[j] += f * kv_summary(s, j);
    }
    if (!(denom > 0.0) || denom < 1e-290) {
      throw std::overflow_error("performer_attention: denominator underflow at query " +
                                std::to_string(n));
    }
    for (std::size_t j = 0; j < d; ++j) report.output(n, j) = numer[j] / denom;
    report.z_estimates[n] = denom;
  }

  report.omegas_used = samples.omegas;
  report.flop_estimate = cost::performer_flops(n_count, m_count, d, s_count);
  report.wallclock_ns =
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

}  // namespace eva
