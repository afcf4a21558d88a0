#include "evabench/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

#include "eva/causal.hpp"
#include "eva/control_variates.hpp"
#include "eva/estimators.hpp"
#include "eva/gradients.hpp"
#include "eva/numerics.hpp"
#include "eva/rng.hpp"

namespace evabench {

namespace {

using namespace eva;

// ---------------------------------------------------------------------------
// Shared generators and metrics.

Mat random_mat(SeededRng& rng, std::size_t rows, std::size_t cols) {
  Mat out(rows, cols);
  for (double& v : out.data) v = rng.next_gaussian();
  return out;
}

Mat random_unit_rows(SeededRng& rng, std::size_t rows, std::size_t cols) {
  Mat out = random_mat(rng, rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double norm = std::sqrt(squared_norm(out.row(r)));
    for (std::size_t j = 0; j < cols; ++j) out(r, j) /= norm;
  }
  return out;
}

AttentionInstance random_instance(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t d) {
  SeededRng rng(seed);
  Mat q = random_unit_rows(rng, n, d);
  Mat k = random_unit_rows(rng, m, d);
  Mat v = random_unit_rows(rng, m, d);
  return AttentionInstance(std::move(q), std::move(k), std::move(v));
}

double max_abs_diff(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  }
  return worst;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double output_mse(const Mat& a, const Mat& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double diff = a.data[i] - b.data[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(a.data.size());
}

double hull_violation(const AttentionInstance& inst, const Mat& output) {
  double worst = 0.0;
  for (std::size_t j = 0; j < inst.dim(); ++j) {
    double lo = inst.V(0, j), hi = inst.V(0, j);
    for (std::size_t m = 1; m < inst.num_keys(); ++m) {
      lo = std::min(lo, inst.V(m, j));
      hi = std::max(hi, inst.V(m, j));
    }
    for (std::size_t n = 0; n < output.rows; ++n) {
      worst = std::max(worst, lo - output(n, j));
      worst = std::max(worst, output(n, j) - hi);
    }
  }
  return std::max(worst, 0.0);
}

InvariantResult make_result(std::string id, bool pass, double worst, std::string detail) {
  InvariantResult result;
  result.id = std::move(id);
  result.pass = pass;
  result.worst_error = worst;
  result.detail = std::move(detail);
  return result;
}

// Welford accumulator for the Monte Carlo invariants.
struct RunningMoments {
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t count = 0;
  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }
  double standard_error() const {
    return std::sqrt(m2 / (static_cast<double>(count) - 1.0) / static_cast<double>(count));
  }
};

// ---------------------------------------------------------------------------
// core-numerics

InvariantResult check_numerics_determinism(std::uint64_t seed) {
  SeededRng a(seed), b(seed), c(seed + 1);
  const Mat first = sample_gaussian(a, 8, 5);
  const Mat second = sample_gaussian(b, 8, 5);
  const Mat other = sample_gaussian(c, 8, 5);
  bool pass = first.data == second.data && first.data != other.data;

  const auto inst = random_instance(seed, 6, 6, 3);
  RFConfig cfg;
  cfg.samples = 16;
  cfg.seed = seed;
  pass = pass && performer_attention(inst, cfg).output.data ==
                     performer_attention(inst, cfg).output.data;
  return make_result("numerics-determinism", pass, pass ? 0.0 : 1.0,
                     "identical seeds give identical draws and estimates");
}

InvariantResult check_softmax_shift_invariance(std::uint64_t seed) {
  SeededRng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(11);
    for (double& x : v) x = 10.0 * rng.next_gaussian();
    const auto base = stable_softmax(v);
    for (double shift : {1e4, -1e4, 123.0}) {
      std::vector<double> moved = v;
      for (double& x : moved) x += shift;
      worst = std::max(worst, max_abs_diff(base, stable_softmax(moved)));
    }
  }
  return make_result("softmax-shift-invariance", worst <= 1e-12, worst,
                     "softmax(v) == softmax(v + c) for |c| <= 1e4");
}

InvariantResult check_logsumexp_shift(std::uint64_t seed) {
  SeededRng rng(seed);
  double worst = 0.0;
  bool finite = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(9);
    for (double& x : v) x = 80.0 * rng.next_gaussian();
    const double max = *std::max_element(v.begin(), v.end());
    std::vector<double> shifted = v;
    for (double& x : shifted) x -= max;
    worst = std::max(worst, std::abs(logsumexp(v) - (logsumexp(shifted) + max)));
  }
  finite = finite && std::isfinite(logsumexp(std::vector<double>{0.0, 699.0}));
  finite = finite && std::isfinite(logsumexp(std::vector<double>{1000.0, 1000.0}));
  return make_result("logsumexp-shift-exact", worst == 0.0 && finite, worst,
                     "exact shift identity; finite below spread 700");
}

// ---------------------------------------------------------------------------
// exact-attention

InvariantResult check_attention_row_stochastic(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 30; ++t) {
    const auto inst = random_instance(seed + t, 7, 11, 5);
    const Mat weights = attention_weights(inst);
    for (std::size_t n = 0; n < weights.rows; ++n) {
      double sum = 0.0;
      for (std::size_t m = 0; m < weights.cols; ++m) {
        worst = std::max(worst, -weights(n, m));
        sum += weights(n, m);
      }
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  return make_result("attention-row-stochastic", worst <= 1e-12, worst,
                     "rows nonnegative and sum to 1");
}

InvariantResult check_attention_convex_hull(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 30; ++t) {
    const auto inst = random_instance(seed + 40 + t, 9, 9, 4);
    worst = std::max(worst, hull_violation(inst, softmax_attention(inst)));
  }
  return make_result("attention-convex-hull", worst <= 1e-12, worst,
                     "outputs inside the per-coordinate value hull");
}

InvariantResult check_attention_shift_regression(std::uint64_t seed) {
  double worst = 0.0;
  SeededRng rng(seed);
  for (std::uint64_t t = 0; t < 20; ++t) {
    auto inst = random_instance(seed + 80 + t, 6, 8, 3);
    const Mat shift = random_mat(rng, 1, 3);
    for (std::size_t m = 0; m < inst.K.rows; ++m) {
      for (std::size_t j = 0; j < 3; ++j) inst.K(m, j) += 0.5 * shift(0, j);
    }
    const AttentionInstance shifted(inst.Q, inst.K, inst.V, inst.logit_scale);
    // Unstabilized direct evaluation; safe at these magnitudes.
    const Mat qs = scaled_queries(shifted);
    const Mat ks = scaled_keys(shifted);
    Mat naive(6, 3);
    for (std::size_t n = 0; n < 6; ++n) {
      double z = 0.0;
      std::vector<double> w(8);
      for (std::size_t m = 0; m < 8; ++m) {
        w[m] = std::exp(dot(qs.row(n), ks.row(m)));
        z += w[m];
      }
      for (std::size_t m = 0; m < 8; ++m) {
        for (std::size_t j = 0; j < 3; ++j) naive(n, j) += (w[m] / z) * shifted.V(m, j);
      }
    }
    worst = std::max(worst, max_abs_diff(softmax_attention(shifted), naive));
  }
  return make_result("attention-logit-shift-regression", worst <= 1e-10, worst,
                     "stabilized output equals the unstabilized form after key shifts");
}

// ---------------------------------------------------------------------------
// random-features

InvariantResult check_rf_kernel_unbiased(std::uint64_t seed) {
  const std::size_t dim = 4;
  const std::size_t draws = 1'000'000;
  SeededRng pair_rng(seed + 7);
  double worst_ratio = 0.0;
  for (int pair = 0; pair < 20; ++pair) {
    const Mat q = random_unit_rows(pair_rng, 1, dim);
    const Mat k = random_unit_rows(pair_rng, 1, dim);
    const double target = std::exp(dot(q.row(0), k.row(0)));
    SeededRng rng(seed + 1000 + pair);
    RunningMoments moments;
    std::vector<double> omega(dim);
    for (std::size_t r = 0; r < draws; ++r) {
      for (double& w : omega) w = rng.next_gaussian();
      moments.add(std::exp(log_xi(q.row(0), omega) + log_xi(k.row(0), omega)));
    }
    const double err = std::abs(moments.mean - target);
    worst_ratio = std::max(worst_ratio, err / (4.0 * moments.standard_error()));
  }
  return make_result("rf-kernel-unbiased", worst_ratio <= 1.0, worst_ratio,
                     "|MC mean - exp(q.k)| / (4 SE) over 20 pairs, 1e6 draws each");
}

InvariantResult check_rf_cancellation(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    SeededRng rng(seed + s);
    const Mat q = random_mat(rng, 4, 3);
    const Mat k1 = random_mat(rng, 1, 3);
    const Mat v1 = random_mat(rng, 1, 3);
    RFConfig cfg;
    cfg.samples = 4;
    cfg.seed = seed + 100 + s;
    const EstimatorReport single = performer_attention({q, k1, v1}, cfg);
    for (std::size_t n = 0; n < 4; ++n) {
      worst = std::max(worst, max_abs_diff(single.output.row(n), v1.row(0)));
    }

    Mat k(5, 3);
    for (std::size_t m = 0; m < 5; ++m) {
      for (std::size_t j = 0; j < 3; ++j) k(m, j) = k1(0, j);
    }
    const Mat v = random_mat(rng, 5, 3);
    const EstimatorReport uniform = performer_attention({q, k, v}, cfg);
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (std::size_t m = 0; m < 5; ++m) mean += v(m, j);
      mean /= 5.0;
      for (std::size_t n = 0; n < 4; ++n) {
        worst = std::max(worst, std::abs(uniform.output(n, j) - mean));
      }
    }
  }
  return make_result("rf-cancellation-exact", worst <= 1e-12, worst,
                     "single-key and identical-key ratios collapse for any seed");
}

InvariantResult check_rf_proposal_invariance(std::uint64_t seed) {
  // The S = 1 self-normalized ratio is biased; what proposal choice leaves
  // untouched are the expectations of the g and h pieces. Aggregate those
  // over 1e5 independent draws and compare the ratio of means against exact
  // attention, with the delta-method standard error of a ratio estimator.
  const auto inst = random_instance(seed + 3, 2, 4, 3);
  const std::size_t query = 1;
  const Mat exact = softmax_attention(inst);
  Mat shifted_mean(1, 3);
  for (std::size_t j = 0; j < 3; ++j) shifted_mean(0, j) = inst.Q(query, j) + inst.K(0, j);

  const std::size_t draws = 100'000;
  double worst_ratio = 0.0;
  std::vector<double> g_draws(draws * 3);
  std::vector<double> h_draws(draws);
  for (const bool shifted : {false, true}) {
    std::vector<double> g_mean(3, 0.0);
    double h_mean = 0.0;
    for (std::size_t r = 0; r < draws; ++r) {
      RFConfig cfg;
      cfg.samples = 1;
      cfg.seed = seed * 31 + r;
      if (shifted) cfg.proposal_mean = shifted_mean;
      const SnisResult snis = snis_estimate(inst, query, cfg);
      for (std::size_t j = 0; j < 3; ++j) {
        g_draws[r * 3 + j] = snis.g[j];
        g_mean[j] += snis.g[j];
      }
      h_draws[r] = snis.h;
      h_mean += snis.h;
    }
    for (double& g : g_mean) g /= static_cast<double>(draws);
    h_mean /= static_cast<double>(draws);
    for (std::size_t j = 0; j < 3; ++j) {
      const double value = g_mean[j] / h_mean;
      double residual_var = 0.0;
      for (std::size_t r = 0; r < draws; ++r) {
        const double residual = g_draws[r * 3 + j] - value * h_draws[r];
        residual_var += residual * residual;
      }
      residual_var /= static_cast<double>(draws - 1);
      const double se = std::sqrt(residual_var / static_cast<double>(draws)) / h_mean;
      const double err = std::abs(value - exact(query, j));
      worst_ratio = std::max(worst_ratio, err / (4.0 * se));
    }
  }
  return make_result("rf-proposal-invariance", worst_ratio <= 1.0, worst_ratio,
                     "ratio of 1e5-draw g, h means within 4 SE, standard and shifted proposals");
}

InvariantResult check_rf_deterministic_mean(std::uint64_t seed) {
  const auto inst = random_instance(seed + 5, 5, 5, 3);
  RFConfig a;
  a.samples = 8;
  a.seed = 1;
  a.mode = SampleMode::deterministic_mean;
  RFConfig b = a;
  b.seed = 999'999;
  const bool same_performer =
      performer_attention(inst, a).output.data == performer_attention(inst, b).output.data;
  const bool same_snis = snis_estimate(inst, 2, a).value == snis_estimate(inst, 2, b).value;
  const bool pass = same_performer && same_snis;
  return make_result("rf-deterministic-mean-mode", pass, pass ? 0.0 : 1.0,
                     "deterministic-mean outputs are seed-invariant");
}

// ---------------------------------------------------------------------------
// control-variates

InvariantResult check_cv_decomposition(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const auto inst = random_instance(seed + 200 + t, 3, 9, 4);
    RFConfig cfg;
    cfg.samples = 6;
    cfg.seed = seed + t;
    const std::size_t n = t % 3;
    const SnisResult snis = snis_estimate(inst, n, cfg);
    const DecomposedTerms terms = decompose(inst, n, draw_samples(cfg, 4));
    double h_sum = 0.0;
    std::vector<double> g_sum(4, 0.0);
    for (std::size_t m = 0; m < 9; ++m) {
      h_sum += terms.h_terms[m];
      for (std::size_t j = 0; j < 4; ++j) g_sum[j] += terms.g_terms(m, j);
      for (std::size_t j = 0; j < 4; ++j) {
        worst = std::max(worst, std::abs(terms.g_terms(m, j) / terms.h_terms[m] - inst.V(m, j)) /
                                    std::max(std::abs(inst.V(m, j)), 1e-12));
      }
    }
    worst = std::max(worst, std::abs(h_sum - snis.h) / snis.h);
    for (std::size_t j = 0; j < 4; ++j) {
      worst = std::max(worst, std::abs(g_sum[j] - snis.g[j]) / std::max(std::abs(snis.g[j]), 1e-12));
    }
  }
  return make_result("cv-decomposition-identities", worst <= 1e-12, worst,
                     "sum g_m = g, sum h_m = h, g_m = h_m v_m (relative)");
}

InvariantResult check_cv_snis_identity(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const auto inst = random_instance(seed + 400 + t, 3, 7, 4);
    RFConfig cfg;
    cfg.samples = 5;
    cfg.seed = seed + 2 * t;
    const std::size_t n = t % 3;
    const SnisResult snis = snis_estimate(inst, n, cfg);
    const DecomposedTerms terms = decompose(inst, n, draw_samples(cfg, 4));
    std::vector<double> beta(4);
    for (std::size_t j = 0; j < 4; ++j) beta[j] = snis.g[j] / snis.h;
    const auto estimate = cv_estimate(terms, GlobalScheme{beta}, expected_h_m(inst, n));
    worst = std::max(worst, max_abs_diff(estimate, snis.value));
  }
  return make_result("cv-snis-identity", worst <= 1e-12, worst,
                     "global running-coefficient estimate equals g / h");
}

InvariantResult check_cv_prop1(std::uint64_t seed) {
  double worst_vs_exact = 0.0;
  double worst_across_seeds = 0.0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const auto inst = random_instance(seed + 600 + t, 64, 64, 16);
    const Mat exact = softmax_attention(inst);
    const Mat betas = optimal_beta_per_token(inst);
    for (std::size_t n = 0; n < 64; ++n) {
      const std::vector<double> eh = expected_h_m(inst, n);
      std::vector<double> first;
      for (std::uint64_t s = 0; s < 10; ++s) {
        RFConfig cfg;
        cfg.samples = 2;
        cfg.seed = seed + s;
        const DecomposedTerms terms = decompose(inst, n, draw_samples(cfg, 16));
        const auto estimate = cv_estimate(terms, PerTokenScheme{betas}, eh);
        worst_vs_exact = std::max(worst_vs_exact, max_abs_diff(estimate, exact.row(n)));
        if (first.empty()) {
          first = estimate;
        } else {
          worst_across_seeds = std::max(worst_across_seeds, max_abs_diff(estimate, first));
        }
      }
    }
  }
  const bool pass = worst_vs_exact <= 1e-10 && worst_across_seeds <= 1e-12;
  std::ostringstream detail;
  detail << "per-token optimum: max|cv - softmax| = " << worst_vs_exact
         << ", cross-seed spread = " << worst_across_seeds;
  return make_result("cv-prop1-exact", pass, worst_vs_exact, detail.str());
}

InvariantResult check_cv_unbiased(std::uint64_t seed) {
  const auto inst = random_instance(seed + 31, 2, 5, 3);
  const std::size_t query = 0;
  const Mat exact = softmax_attention(inst);
  const std::vector<double> eh = expected_h_m(inst, query);

  std::vector<double> mean_v(3, 0.0);
  for (std::size_t m = 0; m < 5; ++m) {
    for (std::size_t j = 0; j < 3; ++j) mean_v[j] += inst.V(m, j) / 5.0;
  }
  SeededRng beta_rng(seed + 77);
  std::vector<double> random_beta(3);
  for (double& b : random_beta) b = beta_rng.next_gaussian();
  const std::vector<std::vector<double>> betas{std::vector<double>(3, 0.0), mean_v, random_beta};

  double worst_ratio = 0.0;
  std::vector<std::vector<RunningMoments>> moments(betas.size(),
                                                   std::vector<RunningMoments>(3));
  for (std::size_t r = 0; r < 200'000; ++r) {
    RFConfig cfg;
    cfg.samples = 1;
    cfg.seed = seed * 17 + r;
    const DecomposedTerms terms = decompose(inst, query, draw_samples(cfg, 3));
    for (std::size_t b = 0; b < betas.size(); ++b) {
      const auto estimate = cv_estimate(terms, GlobalScheme{betas[b]}, eh);
      for (std::size_t j = 0; j < 3; ++j) moments[b][j].add(estimate[j]);
    }
  }
  for (std::size_t b = 0; b < betas.size(); ++b) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double err = std::abs(moments[b][j].mean - exact(query, j));
      worst_ratio = std::max(worst_ratio, err / (4.0 * moments[b][j].standard_error()));
    }
  }
  return make_result("cv-unbiased-constant-beta", worst_ratio <= 1.0, worst_ratio,
                     "2e5 single-sample estimates within 4 SE for beta in {0, mean(V), random}");
}

InvariantResult check_cv_prop2_dominance(std::uint64_t seed) {
  SeededRng rng(seed + 11);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m_count = 4 + static_cast<std::size_t>(rng.next_uniform() * 8);
    const std::size_t d = 2 + static_cast<std::size_t>(rng.next_uniform() * 3);
    const auto inst = random_instance(seed * 3 + trial, 2, m_count, d);
    const std::size_t c_count = 1 + static_cast<std::size_t>(rng.next_uniform() * 3);

    // Random groups over a random nonempty index set U.
    std::vector<std::vector<std::size_t>> groups(c_count);
    for (std::size_t m = 0; m < m_count; ++m) {
      if (rng.next_uniform() < 0.85 || m < c_count) {
        groups[m % c_count].push_back(m);
      }
    }
    bool valid = true;
    for (const auto& g : groups) valid = valid && !g.empty();
    if (!valid) continue;

    const Mat best = optimal_beta_group(inst, 0, groups);
    const double j_best = weighted_mse(inst, 0, groups, best);
    Mat global(c_count, d);
    const Mat row = random_mat(rng, 1, d);
    for (std::size_t c = 0; c < c_count; ++c) {
      for (std::size_t j = 0; j < d; ++j) global(c, j) = row(0, j);
    }
    const double j_global = weighted_mse(inst, 0, groups, global);
    worst = std::max(worst, j_best - j_global);
  }
  return make_result("cv-prop2-group-dominance", worst <= 1e-12, worst,
                     "J(group optimum) <= J(shared beta), 1000 random draws");
}

InvariantResult check_cv_b5_dominance(std::uint64_t seed) {
  SeededRng rng(seed + 13);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m_count = 3 + static_cast<std::size_t>(rng.next_uniform() * 10);
    const std::size_t d = 2 + static_cast<std::size_t>(rng.next_uniform() * 4);
    const Mat values = random_mat(rng, m_count, d);
    std::vector<double> weights(m_count);
    double total = 0.0;
    for (double& w : weights) {
      w = 0.02 + rng.next_uniform();
      total += w;
    }
    for (double& w : weights) w /= total;
    const std::size_t c_count = 1 + static_cast<std::size_t>(rng.next_uniform() * 4);
    std::vector<std::vector<std::size_t>> groups(std::min(c_count, m_count));
    for (std::size_t m = 0; m < m_count; ++m) groups[m % groups.size()].push_back(m);
    std::vector<double> beta(d);
    for (double& b : beta) b = rng.next_gaussian();
    const DominanceResult result = group_mean_dominance_check(groups, beta, weights, values);
    worst = std::max(worst, result.j_grouped - result.j_global);
  }
  return make_result("cv-b5-weighted-mean-dominance", worst <= 1e-12, worst,
                     "weighted group means beat the shared coefficient, 1000 draws");
}

InvariantResult check_cv_prop2_stationarity(std::uint64_t seed) {
  double worst_ratio_err = 0.0;
  for (std::uint64_t t = 0; t < 10; ++t) {
    const auto inst = random_instance(seed + 900 + t, 2, 9, 4);
    const std::vector<std::vector<std::size_t>> groups{{0, 1, 2}, {3, 4, 5}, {6, 7, 8}};
    const Mat best = optimal_beta_group(inst, 0, groups);
    const double j_best = weighted_mse(inst, 0, groups, best);
    SeededRng rng(seed + t);
    Mat direction(3, 4);
    double norm = 0.0;
    for (double& x : direction.data) {
      x = rng.next_gaussian();
      norm += x * x;
    }
    for (double& x : direction.data) x /= std::sqrt(norm);
    auto j_at = [&](double h) {
      Mat probe = best;
      for (std::size_t i = 0; i < probe.data.size(); ++i) probe.data[i] += h * direction.data[i];
      return weighted_mse(inst, 0, groups, probe) - j_best;
    };
    const double ratio = j_at(1e-3) / j_at(1e-4);
    worst_ratio_err = std::max(worst_ratio_err, std::abs(ratio - 100.0));
  }
  return make_result("cv-prop2-stationarity", worst_ratio_err <= 50.0, worst_ratio_err,
                     "J(beta* + h delta) - J(beta*) decays quadratically in h");
}

// ---------------------------------------------------------------------------
// eva-estimators

InvariantResult check_eva_convex_hull(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 30; ++t) {
    const auto inst = random_instance(seed + 1100 + t, 16, 16, 4);
    const PartitionSpec partition = build_partition(16, 16, 4, 4, true);
    RFConfig cfg;
    cfg.samples = 8;
    cfg.seed = seed + t;
    worst = std::max(worst, hull_violation(inst, practical_eva(inst, partition, cfg).output));
    worst = std::max(worst, hull_violation(inst, ideal_eva(inst, partition, cfg).output));
  }
  return make_result("eva-convex-hull", worst <= 1e-10, worst,
                     "estimator outputs stay inside the value hull");
}

InvariantResult check_eva_f1_softmax(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const auto inst = random_instance(seed + 1300 + t, 12, 12, 4);
    RFConfig cfg;
    cfg.samples = 4;
    cfg.seed = seed + t;
    const EstimatorReport rep = ideal_eva(inst, build_partition(12, 12, 12, 0, true), cfg);
    worst = std::max(worst, max_abs_diff(rep.output, softmax_attention(inst)));
  }
  return make_result("eva-f1-softmax-limit", worst <= 1e-12, worst,
                     "K = M reproduces exact softmax attention");
}

InvariantResult check_eva_f1_performer(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const auto inst = random_instance(seed + 1500 + t, 10, 10, 4);
    RFConfig cfg;
    cfg.samples = 16;
    cfg.seed = seed + t;
    const EstimatorReport ideal = ideal_eva(inst, build_partition(10, 10, 0, 1, true), cfg);
    const EstimatorReport rfa = performer_attention(inst, cfg);
    worst = std::max(worst, max_abs_diff(ideal.output, rfa.output));
  }
  return make_result("eva-f1-performer-limit", worst <= 1e-12, worst,
                     "K = 0, C = 1 reproduces performer on shared samples");
}

InvariantResult check_eva_f1_singleton(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const auto inst = random_instance(seed + 1700 + t, 9, 9, 4);
    RFConfig cfg;
    cfg.samples = 8;
    cfg.seed = seed + t;
    const EstimatorReport rep = ideal_eva(inst, build_partition(9, 9, 0, 9, true), cfg);
    worst = std::max(worst, max_abs_diff(rep.output, softmax_attention(inst)));
  }
  return make_result("eva-f1-singleton-limit", worst <= 1e-12, worst,
                     "C = M singleton groups reproduce exact softmax attention");
}

InvariantResult check_eva_f5(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto inst = random_instance(seed + 1900 + t, 10, 10, 4);
    const auto e_sets = e_sets_from_partition(build_partition(10, 10, 2, 0, true));
    RFConfig cfg;
    cfg.samples = 8;
    cfg.seed = seed + t;
    const EstimatorReport sb = scatterbrain(inst, e_sets, cfg);
    SeededRng rng(seed + t);
    std::vector<double> random_beta(4);
    for (double& b : random_beta) b = rng.next_gaussian();
    const std::vector<std::vector<double>> betas{std::vector<double>(4, 0.0), random_beta,
                                                 snis_estimate(inst, 0, cfg).value};
    for (const auto& beta : betas) {
      worst = std::max(worst, max_abs_diff(eva_shared_cv(inst, e_sets, cfg, beta).output,
                                           sb.output));
    }
  }
  return make_result("eva-f5-scatterbrain", worst <= 1e-10, worst,
                     "shared-coefficient form equals scatterbrain for 3 beta choices");
}

InvariantResult check_eva_monotone(std::uint64_t seed) {
  // Unit-norm rows, disjoint groups (the E ∩ P = ∅ setting the exact-weight
  // estimator is stated in). The baseline budget is pinned at S = K + C; the
  // reference estimator's coefficient ratios get enough samples (64) that the
  // comparison tests the partitioned structure, not coefficient noise.
  // Statistical claim: the win rate, not every draw.
  std::size_t wins = 0;
  double ideal_total = 0.0;
  double performer_total = 0.0;
  const std::size_t trials = 100;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto inst = random_instance(seed + 2100 + t, 128, 128, 16);
    const Mat exact = softmax_attention(inst);
    RFConfig performer_cfg;
    performer_cfg.samples = 16;  // K + C
    performer_cfg.seed = seed + t;
    RFConfig ideal_cfg;
    ideal_cfg.samples = 64;
    ideal_cfg.seed = seed + t;
    const double ideal_mse = output_mse(
        ideal_eva(inst, build_partition(128, 128, 8, 8, false), ideal_cfg).output, exact);
    const double performer_mse =
        output_mse(performer_attention(inst, performer_cfg).output, exact);
    if (ideal_mse < performer_mse) ++wins;
    ideal_total += ideal_mse;
    performer_total += performer_mse;
  }
  const double win_rate = static_cast<double>(wins) / trials;
  const double ratio = ideal_total / performer_total;
  const bool pass = win_rate >= 0.9;
  std::ostringstream detail;
  detail << "ideal (K=8, C=8) vs performer (S=16): win rate " << win_rate << ", mean MSE ratio "
         << ratio;
  return make_result("eva-monotone-refinement", pass, 1.0 - win_rate, detail.str());
}

InvariantResult check_eva_seed_invariance(std::uint64_t seed) {
  const auto inst = random_instance(seed + 23, 12, 12, 4);
  const PartitionSpec partition = build_partition(12, 12, 4, 3, true);
  RFConfig a;
  a.mode = SampleMode::deterministic_mean;
  a.seed = 1;
  RFConfig b = a;
  b.seed = 777'777;
  const bool practical_same =
      practical_eva(inst, partition, a).output.data == practical_eva(inst, partition, b).output.data;
  const bool causal_same =
      causal_eva(inst, partition, a).output.data == causal_eva(inst, partition, b).output.data;
  const bool pass = practical_same && causal_same;
  return make_result("eva-deterministic-mean-seed-invariance", pass, pass ? 0.0 : 1.0,
                     "deterministic-mean outputs are bit-identical across seeds");
}

InvariantResult check_eva_flop_linear(std::uint64_t seed) {
  std::vector<std::uint64_t> flops;
  for (std::size_t n : {64, 128, 192, 256}) {
    const auto inst = random_instance(seed + n, n, n, 8);
    RFConfig cfg;
    cfg.mode = SampleMode::deterministic_mean;
    flops.push_back(practical_eva(inst, build_partition(n, n, 16, 8, true), cfg).flop_estimate);
  }
  const bool pass =
      (flops[1] - flops[0]) == (flops[2] - flops[1]) && (flops[2] - flops[1]) == (flops[3] - flops[2]);
  return make_result("eva-flop-linear", pass, pass ? 0.0 : 1.0,
                     "flop counter satisfies an exact linear recurrence in N");
}

// ---------------------------------------------------------------------------
// causal-eva

InvariantResult check_causal_prefix(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const auto inst = random_instance(seed + 2500 + t, 16, 16, 4);
    const PartitionSpec partition = build_partition(16, 16, 4, 4, true);
    RFConfig cfg;
    cfg.seed = seed + t;
    const EstimatorReport before = causal_eva(inst, partition, cfg);
    const std::size_t pivot = 3 + (t % 10);
    SeededRng rng(seed + 3000 + t);
    Mat k = inst.K;
    Mat v = inst.V;
    for (std::size_t m = pivot + 1; m < 16; ++m) {
      for (std::size_t j = 0; j < 4; ++j) {
        k(m, j) += 2.0 * rng.next_gaussian();
        v(m, j) += 2.0 * rng.next_gaussian();
      }
    }
    const EstimatorReport after = causal_eva({inst.Q, k, v, inst.logit_scale}, partition, cfg);
    for (std::size_t n = 0; n <= pivot; ++n) {
      worst = std::max(worst, max_abs_diff(after.output.row(n), before.output.row(n)));
    }
  }
  return make_result("causal-prefix-invariance", worst <= 1e-12, worst,
                     "rows 0..n unchanged under arbitrary future perturbations, 50 trials");
}

InvariantResult check_causal_group_boundary(std::uint64_t seed) {
  const auto inst = random_instance(seed + 27, 12, 12, 3);
  const PartitionSpec partition = build_partition(12, 12, 4, 3, true);
  RFConfig cfg;
  cfg.seed = seed;
  const GroupSummary summary = group_summaries(inst, partition);
  const GroupCoefficients coeffs = group_coefficients(inst, partition, summary, cfg);
  const EstimatorReport reference = causal_eva_with_coefficients(inst, partition, summary, coeffs);
  double worst = 0.0;
  for (std::size_t n = 0; n < 12; ++n) {
    const auto [e_begin, e_end] = partition.e_range(n);
    GroupCoefficients zeroed = coeffs;
    for (std::size_t c = 0; c < 3; ++c) {
      if (partition.group_ranges[c].second > e_begin) {
        for (std::size_t j = 0; j < 3; ++j) zeroed.betas(c, j) = 0.0;
      }
    }
    const EstimatorReport modified = causal_eva_with_coefficients(inst, partition, summary, zeroed);
    worst = std::max(worst, max_abs_diff(modified.output.row(n), reference.output.row(n)));
  }
  return make_result("causal-group-boundary", worst == 0.0, worst,
                     "groups overlapping or right of E contribute exactly nothing");
}

InvariantResult check_causal_normalizer(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto inst = random_instance(seed + 2900 + t, 12, 12, 4);
    const PartitionSpec partition = build_partition(12, 12, 4, 3, true);
    RFConfig cfg;
    cfg.seed = seed + t;
    const EstimatorReport rep = causal_eva(inst, partition, cfg);
    for (std::size_t n = 0; n < 12; ++n) {
      const double self_term =
          std::exp(inst.logit_scale * dot(inst.Q.row(n), inst.K.row(n)));
      worst = std::max(worst, (self_term - rep.z_estimates[n]) / self_term);
    }
  }
  return make_result("causal-normalizer-positive", worst <= 1e-12, std::max(worst, 0.0),
                     "masked normalizer is at least the self term");
}

InvariantResult check_causal_consistency(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 10; ++t) {
    const auto inst = random_instance(seed + 3100 + t, 12, 12, 3);
    const PartitionSpec partition = build_partition(12, 12, 4, 3, true);
    RFConfig cfg;
    cfg.mode = SampleMode::deterministic_mean;
    const EstimatorReport rep = causal_eva(inst, partition, cfg);
    const GroupSummary summary = group_summaries(inst, partition);
    const GroupCoefficients coeffs = group_coefficients(inst, partition, summary, cfg);

    // Last token of each block with every fully-left group visible. The
    // reference is the non-causal combination over exactly that visible set.
    for (const std::size_t n : {7ul, 11ul}) {
      const auto [e_begin, e_end] = partition.e_range(n);
      std::vector<double> numer(3, 0.0);
      double denom = 0.0;
      const Mat qs = scaled_queries(inst);
      const Mat ks = scaled_keys(inst);
      for (std::size_t m = e_begin; m < e_end; ++m) {
        const double w = std::exp(dot(qs.row(n), ks.row(m)));
        denom += w;
        for (std::size_t j = 0; j < 3; ++j) numer[j] += w * inst.V(m, j);
      }
      const double root = std::sqrt(inst.logit_scale);
      for (std::size_t c = 0; c < 3; ++c) {
        if (partition.group_ranges[c].second > e_begin) continue;
        double logit = 0.0;
        for (std::size_t j = 0; j < 3; ++j) logit += qs(n, j) * root * summary.k_tilde(c, j);
        const double u = std::exp(logit);
        denom += u;
        for (std::size_t j = 0; j < 3; ++j) numer[j] += u * coeffs.betas(c, j);
      }
      for (std::size_t j = 0; j < 3; ++j) {
        worst = std::max(worst, std::abs(rep.output(n, j) - numer[j] / denom));
      }
    }
  }
  return make_result("causal-noncausal-consistency", worst <= 1e-12, worst,
                     "block-final rows equal the visible-set combination");
}

// ---------------------------------------------------------------------------
// grad-check

InvariantResult check_grad_softmax(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto inst = random_instance(seed + 3300 + t, 6, 6, 4);
    SeededRng rng(seed + t);
    const Mat upstream = random_mat(rng, 6, 4);
    const GradReport analytic = backward_softmax_attention(inst, upstream);
    auto functional = [&](const Mat& m, int which) {
      const AttentionInstance probe(which == 0 ? m : inst.Q, which == 1 ? m : inst.K,
                                    which == 2 ? m : inst.V, inst.logit_scale);
      const Mat out = softmax_attention(probe);
      double acc = 0.0;
      for (std::size_t i = 0; i < out.data.size(); ++i) acc += upstream.data[i] * out.data[i];
      return acc;
    };
    worst = std::max(worst, max_rel_error(analytic.dQ, finite_difference_grad([&](const Mat& m) {
                       return functional(m, 0);
                     }, inst.Q, 1e-5)));
    worst = std::max(worst, max_rel_error(analytic.dK, finite_difference_grad([&](const Mat& m) {
                       return functional(m, 1);
                     }, inst.K, 1e-5)));
    worst = std::max(worst, max_rel_error(analytic.dV, finite_difference_grad([&](const Mat& m) {
                       return functional(m, 2);
                     }, inst.V, 1e-5)));
  }
  return make_result("grad-softmax-fd", worst <= 1e-4, worst,
                     "analytic softmax backward vs central differences, 20 instances");
}

InvariantResult check_grad_eva(std::uint64_t seed) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto inst = random_instance(seed + 3500 + t, 8, 8, 4);
    const PartitionSpec partition = build_partition(8, 8, 4, 2, true);
    RFConfig cfg;
    cfg.mode = SampleMode::deterministic_mean;
    SeededRng rng(seed + t);
    const Mat upstream = random_mat(rng, 8, 4);
    const GradReport analytic = backward_practical_eva(inst, partition, cfg, {}, upstream);
    auto functional = [&](const Mat& m, int which) {
      const AttentionInstance probe(which == 0 ? m : inst.Q, which == 1 ? m : inst.K,
                                    which == 2 ? m : inst.V, inst.logit_scale);
      const Mat out = practical_eva(probe, partition, cfg).output;
      double acc = 0.0;
      for (std::size_t i = 0; i < out.data.size(); ++i) acc += upstream.data[i] * out.data[i];
      return acc;
    };
    worst = std::max(worst, max_rel_error(analytic.dQ, finite_difference_grad([&](const Mat& m) {
                       return functional(m, 0);
                     }, inst.Q, 1e-5)));
    worst = std::max(worst, max_rel_error(analytic.dK, finite_difference_grad([&](const Mat& m) {
                       return functional(m, 1);
                     }, inst.K, 1e-5)));
    worst = std::max(worst, max_rel_error(analytic.dV, finite_difference_grad([&](const Mat& m) {
                       return functional(m, 2);
                     }, inst.V, 1e-5)));
  }
  return make_result("grad-eva-fd", worst <= 1e-4, worst,
                     "analytic practical-estimator backward vs central differences, 20 instances");
}

InvariantResult check_grad_linearity(std::uint64_t seed) {
  const auto inst = random_instance(seed + 41, 8, 8, 4);
  const PartitionSpec partition = build_partition(8, 8, 4, 2, true);
  RFConfig cfg;
  cfg.mode = SampleMode::deterministic_mean;
  SeededRng rng(seed);
  const Mat upstream = random_mat(rng, 8, 4);

  double worst = 0.0;
  bool exact_v = true;
  for (const bool use_eva : {false, true}) {
    auto backward = [&](const Mat& u) {
      return use_eva ? backward_practical_eva(inst, partition, cfg, {}, u)
                     : backward_softmax_attention(inst, u);
    };
    const GradReport base = backward(upstream);
    Mat doubled = upstream;
    for (double& x : doubled.data) x *= 2.0;
    const GradReport twice = backward(doubled);
    for (std::size_t i = 0; i < base.dV.data.size(); ++i) {
      exact_v = exact_v && twice.dV.data[i] == 2.0 * base.dV.data[i];
    }
    for (std::size_t i = 0; i < base.dQ.data.size(); ++i) {
      worst = std::max(worst, std::abs(twice.dQ.data[i] - 2.0 * base.dQ.data[i]));
    }
    for (std::size_t i = 0; i < base.dK.data.size(); ++i) {
      worst = std::max(worst, std::abs(twice.dK.data[i] - 2.0 * base.dK.data[i]));
    }
  }
  return make_result("grad-upstream-linearity", exact_v && worst <= 1e-12, worst,
                     "scaling upstream scales the V gradient exactly, others to 1e-12");
}

}  // namespace

std::vector<InvariantResult> run_verification(std::uint64_t base_seed) {
  std::vector<InvariantResult> results;
  results.push_back(check_numerics_determinism(base_seed));
  results.push_back(check_softmax_shift_invariance(base_seed));
  results.push_back(check_logsumexp_shift(base_seed));
  results.push_back(check_attention_row_stochastic(base_seed));
  results.push_back(check_attention_convex_hull(base_seed));
  results.push_back(check_attention_shift_regression(base_seed));
  results.push_back(check_rf_kernel_unbiased(base_seed));
  results.push_back(check_rf_cancellation(base_seed));
  results.push_back(check_rf_proposal_invariance(base_seed));
  results.push_back(check_rf_deterministic_mean(base_seed));
  results.push_back(check_cv_decomposition(base_seed));
  results.push_back(check_cv_snis_identity(base_seed));
  results.push_back(check_cv_prop1(base_seed));
  results.push_back(check_cv_unbiased(base_seed));
  results.push_back(check_cv_prop2_dominance(base_seed));
  results.push_back(check_cv_b5_dominance(base_seed));
  results.push_back(check_cv_prop2_stationarity(base_seed));
  results.push_back(check_eva_convex_hull(base_seed));
  results.push_back(check_eva_f1_softmax(base_seed));
  results.push_back(check_eva_f1_performer(base_seed));
  results.push_back(check_eva_f1_singleton(base_seed));
  results.push_back(check_eva_f5(base_seed));
  results.push_back(check_eva_monotone(base_seed));
  results.push_back(check_eva_seed_invariance(base_seed));
  results.push_back(check_eva_flop_linear(base_seed));
  results.push_back(check_causal_prefix(base_seed));
  results.push_back(check_causal_group_boundary(base_seed));
  results.push_back(check_causal_normalizer(base_seed));
  results.push_back(check_causal_consistency(base_seed));
  results.push_back(check_grad_softmax(base_seed));
  results.push_back(check_grad_eva(base_seed));
  results.push_back(check_grad_linearity(base_seed));
  return results;
}

std::string verification_report_json(std::uint64_t base_seed,
                                     const std::vector<InvariantResult>& results) {
  nlohmann::ordered_json report;
  report["seed"] = base_seed;
  report["invariants"] = nlohmann::ordered_json::array();
  std::size_t failed = 0;
  for (const auto& result : results) {
    nlohmann::ordered_json entry;
    entry["id"] = result.id;
    entry["pass"] = result.pass;
    entry["worst_error"] = result.worst_error;
    entry["detail"] = result.detail;
    report["invariants"].push_back(entry);
    if (!result.pass) ++failed;
  }
  report["summary"] = {{"total", results.size()}, {"failed", failed}};
  return report.dump(2) + "\n";
}

std::string verification_report_csv(const std::vector<InvariantResult>& results) {
  std::ostringstream out;
  out << "invariant_id,pass,worst_error,detail\n";
  out.precision(17);
  for (const auto& result : results) {
    std::string detail = result.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    out << result.id << ',' << (result.pass ? "true" : "false") << ',' << result.worst_error
        << ',' << detail << '\n';
  }
  return out.str();
}

}  // namespace evabench
