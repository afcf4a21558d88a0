#include "eva/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace eva {

GradReport backward_softmax_attention(const AttentionInstance& inst, const Mat& upstream) {
  const std::size_t n_count = inst.num_queries();
  const std::size_t m_count = inst.num_keys();
  const std::size_t d = inst.dim();
  if (upstream.rows != n_count || upstream.cols != d) {
    throw std::invalid_argument("backward_softmax_attention: upstream shape mismatch");
  }

  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const Mat weights = attention_weights(inst);
  const double root = std::sqrt(inst.logit_scale);

  GradReport report;
  report.dQ = Mat(n_count, d);
  report.dK = Mat(m_count, d);
  report.dV = Mat(m_count, d);

  std::vector<double> dp(m_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    double weighted_dp = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
      dp[m] = dot(upstream.row(n), inst.V.row(m));
      weighted_dp += weights(n, m) * dp[m];
    }
    for (std::size_t m = 0; m < m_count; ++m) {
      const double p = weights(n, m);
      const double dlogit = p * (dp[m] - weighted_dp);
      for (std::size_t j = 0; j < d; ++j) {
        report.dV(m, j) += p * upstream(n, j);
        report.dQ(n, j) += dlogit * ks(m, j);
        report.dK(m, j) += dlogit * qs(n, j);
      }
    }
  }
  // Gradients were accumulated against the scaled rows q' = sqrt(s) q.
  for (double& v : report.dQ.data) v *= root;
  for (double& v : report.dK.data) v *= root;
  return report;
}

GradReport backward_practical_eva(const AttentionInstance& inst, const PartitionSpec& partition,
                                  const RFConfig& cfg, const SigmaConfig& sigma,
                                  const Mat& upstream, ProposalCenter center) {
  if (cfg.mode != SampleMode::deterministic_mean) {
    throw std::invalid_argument(
        "backward_practical_eva: only the deterministic-mean configuration is differentiable");
  }
  if (sigma.mode != SigmaMode::identity) {
    throw std::invalid_argument("backward_practical_eva: only identity sigma is supported");
  }
  if (partition.num_groups > 0 && !partition.groups_over_full_range) {
    throw std::invalid_argument("backward_practical_eva: groups must be query-independent");
  }
  const std::size_t n_count = inst.num_queries();
  const std::size_t m_count = inst.num_keys();
  const std::size_t c_count = partition.num_groups;
  const std::size_t d = inst.dim();
  if (upstream.rows != n_count || upstream.cols != d) {
    throw std::invalid_argument("backward_practical_eva: upstream shape mismatch");
  }
  if (partition.num_keys != m_count || partition.num_queries != n_count) {
    throw std::invalid_argument("backward_practical_eva: partition does not match the instance");
  }
  if (c_count > n_count) {
    throw std::invalid_argument("backward_practical_eva: more groups than query rows to pool");
  }

  const double root = std::sqrt(inst.logit_scale);
  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);

  // Forward state, recomputed here: raw-space pooled summaries, proposal
  // centers (= omegas), group weights, and coefficients.
  const auto query_chunks = near_equal_chunks(n_count, c_count);
  Mat k_tilde(c_count, d);
  Mat q_tilde(c_count, d);
  Mat omegas(c_count, d);
  Mat group_keys(c_count, d);  // sqrt(scale) * k~_c
  Mat betas(c_count, d);
  Mat rho;  // normalized xi weights per group, C x M (zero outside the group)
  if (c_count > 0) {
    rho = Mat(c_count, m_count);
    for (std::size_t c = 0; c < c_count; ++c) {
      const auto [kb, ke] = partition.group_ranges[c];
      for (std::size_t m = kb; m < ke; ++m) {
        for (std::size_t j = 0; j < d; ++j) k_tilde(c, j) += inst.K(m, j);
      }
      for (std::size_t j = 0; j < d; ++j) k_tilde(c, j) /= static_cast<double>(ke - kb);
      const auto [qb, qe] = query_chunks[c];
      for (std::size_t n = qb; n < qe; ++n) {
        for (std::size_t j = 0; j < d; ++j) q_tilde(c, j) += inst.Q(n, j);
      }
      for (std::size_t j = 0; j < d; ++j) q_tilde(c, j) /= static_cast<double>(qe - qb);

      for (std::size_t j = 0; j < d; ++j) {
        group_keys(c, j) = root * k_tilde(c, j);
        if (center == ProposalCenter::summary_sum) {
          omegas(c, j) = root * q_tilde(c, j) + root * k_tilde(c, j);
        } else if (center == ProposalCenter::query_summary) {
          omegas(c, j) = root * q_tilde(c, j);
        }
      }

      double max_log = -std::numeric_limits<double>::infinity();
      for (std::size_t m = kb; m < ke; ++m) {
        max_log = std::max(max_log, log_xi(ks.row(m), omegas.row(c)));
      }
      double mass = 0.0;
      for (std::size_t m = kb; m < ke; ++m) {
        const double w = std::exp(log_xi(ks.row(m), omegas.row(c)) - max_log);
        rho(c, m) = w;
        mass += w;
      }
      for (std::size_t m = kb; m < ke; ++m) {
        rho(c, m) /= mass;
        for (std::size_t j = 0; j < d; ++j) betas(c, j) += rho(c, m) * inst.V(m, j);
      }
    }
  }

  GradReport report;
  report.dQ = Mat(n_count, d);  // accumulates d/dQ' until the final rescale
  report.dK = Mat(m_count, d);
  report.dV = Mat(m_count, d);
  Mat dbeta(c_count, d);
  Mat dgroup_key(c_count, d);

  std::vector<double> e_weights(partition.block_size);
  std::vector<double> g_weights(c_count);
  std::vector<double> y(d);
  for (std::size_t n = 0; n < n_count; ++n) {
    const auto [e_begin, e_end] = partition.e_range(n);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t m = e_begin; m < e_end; ++m) {
      max_logit = std::max(max_logit, dot(qs.row(n), ks.row(m)));
    }
    for (std::size_t c = 0; c < c_count; ++c) {
      g_weights[c] = dot(qs.row(n), group_keys.row(c));
      max_logit = std::max(max_logit, g_weights[c]);
    }
    double denom = 0.0;
    for (std::size_t m = e_begin; m < e_end; ++m) {
      e_weights[m - e_begin] = std::exp(dot(qs.row(n), ks.row(m)) - max_logit);
      denom += e_weights[m - e_begin];
    }
    for (std::size_t c = 0; c < c_count; ++c) {
      g_weights[c] = std::exp(g_weights[c] - max_logit);
      denom += g_weights[c];
    }
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t m = e_begin; m < e_end; ++m) {
      const double p = e_weights[m - e_begin] / denom;
      e_weights[m - e_begin] = p;
      for (std::size_t j = 0; j < d; ++j) y[j] += p * inst.V(m, j);
    }
    for (std::size_t c = 0; c < c_count; ++c) {
      const double p = g_weights[c] / denom;
      g_weights[c] = p;
      for (std::size_t j = 0; j < d; ++j) y[j] += p * betas(c, j);
    }

    const double upstream_dot_y = dot(upstream.row(n), std::span<const double>(y));
    for (std::size_t m = e_begin; m < e_end; ++m) {
      const double p = e_weights[m - e_begin];
      const double dlogit = p * (dot(upstream.row(n), inst.V.row(m)) - upstream_dot_y);
      for (std::size_t j = 0; j < d; ++j) {
        report.dV(m, j) += p * upstream(n, j);
        report.dQ(n, j) += dlogit * ks(m, j);
        report.dK(m, j) += dlogit * qs(n, j);
      }
    }
    for (std::size_t c = 0; c < c_count; ++c) {
      const double p = g_weights[c];
      const double dlogit = p * (dot(upstream.row(n), betas.row(c)) - upstream_dot_y);
      for (std::size_t j = 0; j < d; ++j) {
        dbeta(c, j) += p * upstream(n, j);
        report.dQ(n, j) += dlogit * group_keys(c, j);
        dgroup_key(c, j) += dlogit * qs(n, j);
      }
    }
  }

  // Chain through the group coefficients and summaries.
  for (std::size_t c = 0; c < c_count; ++c) {
    const auto [kb, ke] = partition.group_ranges[c];
    const double dbeta_dot_beta = dot(dbeta.row(c), betas.row(c));
    std::vector<double> domega(d, 0.0);
    for (std::size_t m = kb; m < ke; ++m) {
      const double r = rho(c, m);
      const double dlogw = r * (dot(dbeta.row(c), inst.V.row(m)) - dbeta_dot_beta);
      for (std::size_t j = 0; j < d; ++j) {
        report.dV(m, j) += r * dbeta(c, j);
        domega[j] += dlogw * ks(m, j);
        // d log xi / d k' = omega - k'
        report.dK(m, j) += dlogw * (omegas(c, j) - ks(m, j));
      }
    }

    // omega_c and the group logit key both feed the raw summaries.
    std::vector<double> dk_tilde(d, 0.0);
    std::vector<double> dq_tilde(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      dk_tilde[j] = root * dgroup_key(c, j);
      if (center == ProposalCenter::summary_sum) {
        dk_tilde[j] += root * domega[j];
        dq_tilde[j] += root * domega[j];
      } else if (center == ProposalCenter::query_summary) {
        dq_tilde[j] += root * domega[j];
      }
    }
    const double inv_group = 1.0 / static_cast<double>(ke - kb);
    for (std::size_t m = kb; m < ke; ++m) {
      // Raw-space mean pooling; folded into dK after the scaled rescale below,
      // so stash it pre-divided by sqrt(scale).
      for (std::size_t j = 0; j < d; ++j) report.dK(m, j) += dk_tilde[j] * inv_group / root;
    }
    const auto [qb, qe] = query_chunks[c];
    const double inv_chunk = 1.0 / static_cast<double>(qe - qb);
    for (std::size_t n = qb; n < qe; ++n) {
      for (std::size_t j = 0; j < d; ++j) report.dQ(n, j) += dq_tilde[j] * inv_chunk / root;
    }
  }

  for (double& v : report.dQ.data) v *= root;
  for (double& v : report.dK.data) v *= root;
  return report;
}

Mat finite_difference_grad(const std::function<double(const Mat&)>& f, const Mat& x, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw std::invalid_argument("finite_difference_grad: h must lie in [1e-7, 1e-3]");
  }
  Mat grad(x.rows, x.cols);
  Mat probe = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double original = probe.data[i];
    probe.data[i] = original + h;
    const double up = f(probe);
    probe.data[i] = original - h;
    const double down = f(probe);
    probe.data[i] = original;
    grad.data[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const Mat& analytic, const Mat& reference, double floor) {
  if (analytic.rows != reference.rows || analytic.cols != reference.cols) {
    throw std::invalid_argument("max_rel_error: shape mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.data.size(); ++i) {
    const double denom = std::max(std::abs(analytic.data[i]), floor);
    worst = std::max(worst, std::abs(analytic.data[i] - reference.data[i]) / denom);
  }
  return worst;
}

}  // namespace eva
