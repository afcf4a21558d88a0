#include <cmath>
#include <vector>

#include "doctest.h"
#include "eva/causal.hpp"
#include "eva/estimators.hpp"
#include "eva/testing.hpp"
#include "helpers.hpp"

using namespace eva;
using eva::test::max_abs_diff;

namespace {

// Literal unstabilized transcription of the practical estimator in its
// deterministic inference configuration, for d = 1 and identity sigma.
std::vector<double> scalar_practical_eva(const AttentionInstance& inst,
                                         const PartitionSpec& partition) {
  const double root = std::sqrt(inst.logit_scale);
  const std::size_t n_count = inst.num_queries();
  const std::size_t c_count = partition.num_groups;

  const auto query_chunks = near_equal_chunks(n_count, c_count);
  std::vector<double> k_tilde(c_count, 0.0), q_tilde(c_count, 0.0);
  std::vector<double> beta(c_count, 0.0);
  for (std::size_t c = 0; c < c_count; ++c) {
    const auto [kb, ke] = partition.group_ranges[c];
    for (std::size_t m = kb; m < ke; ++m) k_tilde[c] += inst.K(m, 0);
    k_tilde[c] /= static_cast<double>(ke - kb);
    const auto [qb, qe] = query_chunks[c];
    for (std::size_t n = qb; n < qe; ++n) q_tilde[c] += inst.Q(n, 0);
    q_tilde[c] /= static_cast<double>(qe - qb);

    const double omega = root * (q_tilde[c] + k_tilde[c]);
    double mass = 0.0;
    for (std::size_t m = kb; m < ke; ++m) {
      const double ks = root * inst.K(m, 0);
      const double w = std::exp(omega * ks - 0.5 * ks * ks);
      mass += w;
      beta[c] += w * inst.V(m, 0);
    }
    beta[c] /= mass;
  }

  std::vector<double> out(n_count, 0.0);
  for (std::size_t n = 0; n < n_count; ++n) {
    const double qn = root * inst.Q(n, 0);
    const auto [eb, ee] = partition.e_range(n);
    double s_term = 0.0, z_term = 0.0;
    for (std::size_t m = eb; m < ee; ++m) {
      const double w = std::exp(qn * root * inst.K(m, 0));
      s_term += w * inst.V(m, 0);
      z_term += w;
    }
    double r_term = 0.0;
    for (std::size_t c = 0; c < c_count; ++c) {
      const double u = std::exp(qn * root * k_tilde[c]);
      r_term += u * beta[c];
      z_term += u;
    }
    out[n] = (s_term + r_term) / z_term;
  }
  return out;
}

void check_in_value_hull(const AttentionInstance& inst, const Mat& output, double slack) {
  for (std::size_t j = 0; j < inst.dim(); ++j) {
    double lo = inst.V(0, j), hi = inst.V(0, j);
    for (std::size_t m = 1; m < inst.num_keys(); ++m) {
      lo = std::min(lo, inst.V(m, j));
      hi = std::max(hi, inst.V(m, j));
    }
    for (std::size_t n = 0; n < output.rows; ++n) {
      CHECK(output(n, j) >= lo - slack);
      CHECK(output(n, j) <= hi + slack);
    }
  }
}

}  // namespace

TEST_SUITE_BEGIN("estimators");

TEST_CASE("group summaries pool and transform") {
  // Mean of {(0,2),(2,0)} is (1,1).
  const AttentionInstance inst(Mat(2, 2, {0.1, 0.2, 0.3, 0.4}), Mat(2, 2, {0.0, 2.0, 2.0, 0.0}),
                               Mat(2, 2, {1.0, 0.0, 0.0, 1.0}), 1.0);
  const PartitionSpec partition = build_partition(2, 2, 0, 1, true);
  const GroupSummary summary = group_summaries(inst, partition);
  CHECK(summary.k_tilde(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(summary.k_tilde(0, 1) == doctest::Approx(1.0).epsilon(1e-15));

  // All keys in the group equal: the summary is that key.
  const AttentionInstance same(Mat(2, 2, {0.1, 0.2, 0.3, 0.4}), Mat(2, 2, {0.7, -0.3, 0.7, -0.3}),
                               Mat(2, 2, {1.0, 0.0, 0.0, 1.0}), 1.0);
  const GroupSummary same_summary = group_summaries(same, partition);
  CHECK(same_summary.k_tilde(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(same_summary.k_tilde(0, 1) == doctest::Approx(-0.3).epsilon(1e-15));
}

TEST_CASE("linear_layernorm summaries match the normalization formula") {
  const auto inst = eva::test::random_instance(5, 6, 6, 4);
  const PartitionSpec partition = build_partition(6, 6, 0, 2, true);
  SigmaConfig sigma;
  sigma.mode = SigmaMode::linear_layernorm;
  sigma.weights = Mat(4, 4);
  for (std::size_t i = 0; i < 4; ++i) sigma.weights(i, i) = 1.0;  // identity projection

  const GroupSummary summary = group_summaries(inst, partition, sigma);
  for (std::size_t c = 0; c < 2; ++c) {
    // Scalar oracle: pooled mean, then (x - mean) / sqrt(population var).
    const auto [begin, end] = partition.group_ranges[c];
    std::vector<double> pooled(4, 0.0);
    for (std::size_t m = begin; m < end; ++m) {
      for (std::size_t j = 0; j < 4; ++j) pooled[j] += inst.K(m, j);
    }
    for (double& x : pooled) x /= static_cast<double>(end - begin);
    double mean = 0.0;
    for (double x : pooled) mean += x;
    mean /= 4.0;
    double var = 0.0;
    for (double x : pooled) var += (x - mean) * (x - mean);
    var /= 4.0;
    double check_mean = 0.0, check_sq = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      const double expected = (pooled[j] - mean) / std::sqrt(var);
      CHECK(summary.k_tilde(c, j) == doctest::Approx(expected).epsilon(1e-12));
      check_mean += summary.k_tilde(c, j);
      check_sq += summary.k_tilde(c, j) * summary.k_tilde(c, j);
    }
    CHECK(std::abs(check_mean) <= 1e-12);          // zero mean
    CHECK(check_sq / 4.0 == doctest::Approx(1.0).epsilon(1e-12));  // unit variance
  }
}

TEST_CASE("group coefficients are convex and collapse on degenerate groups") {
  SeededRng rng(8);
  const Mat q = eva::test::random_mat(rng, 6, 3);
  const Mat k = eva::test::random_mat(rng, 6, 3);

  // Identical values: the coefficient is that value regardless of omega.
  Mat v_same(6, 3);
  for (std::size_t m = 0; m < 6; ++m) {
    v_same(m, 0) = 1.5;
    v_same(m, 1) = -0.5;
    v_same(m, 2) = 2.0;
  }
  const AttentionInstance same(q, k, v_same);
  const PartitionSpec partition = build_partition(6, 6, 0, 2, true);
  const GroupSummary summary = group_summaries(same, partition);
  RFConfig cfg;
  cfg.seed = 3;
  const GroupCoefficients coeffs = group_coefficients(same, partition, summary, cfg);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(coeffs.betas(c, 0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(coeffs.betas(c, 1) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(coeffs.betas(c, 2) == doctest::Approx(2.0).epsilon(1e-12));
  }

  // Singleton groups return the value rows exactly.
  const Mat v = eva::test::random_mat(rng, 6, 3);
  const AttentionInstance inst(q, k, v);
  const PartitionSpec singles = build_partition(6, 6, 0, 6, true);
  const GroupCoefficients single_coeffs =
      group_coefficients(inst, singles, group_summaries(inst, singles), cfg);
  CHECK(max_abs_diff(single_coeffs.betas, v) <= 1e-14);

  // Deterministic-mean mode ignores the seed.
  RFConfig det;
  det.mode = SampleMode::deterministic_mean;
  det.seed = 1;
  RFConfig det2 = det;
  det2.seed = 424242;
  CHECK(group_coefficients(inst, partition, group_summaries(inst, partition), det).betas.data ==
        group_coefficients(inst, partition, group_summaries(inst, partition), det2).betas.data);
}

TEST_CASE("ideal EVA limit: E covering everything reproduces softmax attention") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = eva::test::random_instance(seed, 12, 12, 4);
    const PartitionSpec partition = build_partition(12, 12, 12, 0, true);
    RFConfig cfg;
    cfg.samples = 4;
    cfg.seed = seed;
    const EstimatorReport rep = ideal_eva(inst, partition, cfg);
    CHECK(max_abs_diff(rep.output, softmax_attention(inst)) <= 1e-12);
  }
}

TEST_CASE("ideal EVA limit: one group and no E reproduces performer on shared samples") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = eva::test::random_instance(seed + 30, 10, 10, 4);
    const PartitionSpec partition = build_partition(10, 10, 0, 1, true);
    RFConfig cfg;
    cfg.samples = 16;
    cfg.seed = seed;
    const EstimatorReport ideal = ideal_eva(inst, partition, cfg);
    const EstimatorReport rfa = performer_attention(inst, cfg);
    CHECK(max_abs_diff(ideal.output, rfa.output) <= 1e-12);
  }
}

TEST_CASE("ideal EVA limit: singleton groups reproduce softmax attention") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = eva::test::random_instance(seed + 60, 9, 9, 4);
    const PartitionSpec partition = build_partition(9, 9, 0, 9, true);
    RFConfig cfg;
    cfg.samples = 8;
    cfg.seed = seed;
    const EstimatorReport rep = ideal_eva(inst, partition, cfg);
    CHECK(max_abs_diff(rep.output, softmax_attention(inst)) <= 1e-12);

    IdealEvaOptions single;
    single.beta_kind = GroupBetaKind::single_sample;
    const EstimatorReport rep_single = ideal_eva(inst, partition, cfg, single);
    CHECK(max_abs_diff(rep_single.output, softmax_attention(inst)) <= 1e-12);
  }
}

TEST_CASE("ideal EVA with disjoint groups stays in the value hull") {
  const auto inst = eva::test::random_instance(123, 16, 16, 4);
  const PartitionSpec partition = build_partition(16, 16, 4, 3, false);
  RFConfig cfg;
  cfg.samples = 8;
  cfg.seed = 11;
  const EstimatorReport rep = ideal_eva(inst, partition, cfg);
  check_in_value_hull(inst, rep.output, 1e-10);
}

TEST_CASE("practical EVA degenerates to softmax attention when E covers everything") {
  const auto inst = eva::test::random_instance(17, 10, 10, 3);
  const PartitionSpec partition = build_partition(10, 10, 10, 0, true);
  RFConfig cfg;
  const EstimatorReport rep = practical_eva(inst, partition, cfg);
  CHECK(max_abs_diff(rep.output, softmax_attention(inst)) <= 1e-12);
}

TEST_CASE("practical EVA on constant values returns that value") {
  SeededRng rng(9);
  const Mat q = eva::test::random_mat(rng, 8, 3);
  Mat k(8, 3);
  Mat v(8, 3);
  for (std::size_t m = 0; m < 8; ++m) {
    for (std::size_t j = 0; j < 3; ++j) {
      k(m, j) = 0.3 * (j + 1);
      v(m, j) = -1.0 + static_cast<double>(j);
    }
  }
  const AttentionInstance inst(q, k, v);
  const PartitionSpec partition = build_partition(8, 8, 2, 3, true);
  RFConfig cfg;
  cfg.seed = 5;
  const EstimatorReport rep = practical_eva(inst, partition, cfg);
  for (std::size_t n = 0; n < 8; ++n) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(rep.output(n, j) == doctest::Approx(v(0, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("practical EVA matches an independent scalar transcription (d = 1)") {
  SeededRng rng(33);
  const Mat q = eva::test::random_mat(rng, 4, 1);
  const Mat k = eva::test::random_mat(rng, 4, 1);
  const Mat v = eva::test::random_mat(rng, 4, 1);
  const AttentionInstance inst(q, k, v);
  const PartitionSpec partition = build_partition(4, 4, 2, 2, true);
  RFConfig cfg;
  cfg.mode = SampleMode::deterministic_mean;

  const EstimatorReport rep = practical_eva(inst, partition, cfg);
  const std::vector<double> oracle = scalar_practical_eva(inst, partition);
  for (std::size_t n = 0; n < 4; ++n) {
    CHECK(rep.output(n, 0) == doctest::Approx(oracle[n]).epsilon(1e-12));
  }
}

TEST_CASE("EVA outputs stay in the value hull") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = eva::test::random_instance(seed + 200, 16, 16, 5);
    const PartitionSpec partition = build_partition(16, 16, 4, 4, true);
    RFConfig cfg;
    cfg.samples = 8;
    cfg.seed = seed;
    check_in_value_hull(inst, practical_eva(inst, partition, cfg).output, 1e-10);
    check_in_value_hull(inst, ideal_eva(inst, partition, cfg).output, 1e-10);

    // Groups-only configuration (no exact set).
    const PartitionSpec groups_only = build_partition(16, 16, 0, 4, true);
    check_in_value_hull(inst, practical_eva(inst, groups_only, cfg).output, 1e-10);
  }
}

TEST_CASE("alternate proposal centers are accepted and differ") {
  const auto inst = eva::test::random_instance(44, 12, 12, 3);
  const PartitionSpec partition = build_partition(12, 12, 4, 3, true);
  RFConfig cfg;
  cfg.mode = SampleMode::deterministic_mean;
  PracticalEvaOptions sum_opts;    // default: q~ + k~
  PracticalEvaOptions q_opts;
  q_opts.center = ProposalCenter::query_summary;
  PracticalEvaOptions zero_opts;
  zero_opts.center = ProposalCenter::zero;
  const Mat with_sum = practical_eva(inst, partition, cfg, {}, sum_opts).output;
  const Mat with_q = practical_eva(inst, partition, cfg, {}, q_opts).output;
  const Mat with_zero = practical_eva(inst, partition, cfg, {}, zero_opts).output;
  CHECK(max_abs_diff(with_sum, with_q) > 1e-9);
  CHECK(max_abs_diff(with_sum, with_zero) > 1e-9);
  check_in_value_hull(inst, with_q, 1e-10);
  check_in_value_hull(inst, with_zero, 1e-10);
}

TEST_CASE("deterministic-mean practical EVA is bit-identical across seeds") {
  const auto inst = eva::test::random_instance(5, 12, 12, 4);
  const PartitionSpec partition = build_partition(12, 12, 4, 3, true);
  RFConfig a;
  a.mode = SampleMode::deterministic_mean;
  a.seed = 0;
  RFConfig b = a;
  b.seed = 123456789;
  CHECK(practical_eva(inst, partition, a).output.data ==
        practical_eva(inst, partition, b).output.data);
}

TEST_CASE("practical EVA flop counter is exactly affine in N") {
  std::vector<std::uint64_t> flops;
  for (std::size_t n : {64, 128, 192, 256}) {
    const PartitionSpec partition = build_partition(n, n, 16, 8, true);
    const auto inst = eva::test::random_instance(1, n, n, 8);
    RFConfig cfg;
    cfg.mode = SampleMode::deterministic_mean;
    flops.push_back(practical_eva(inst, partition, cfg).flop_estimate);
  }
  const auto d1 = flops[1] - flops[0];
  const auto d2 = flops[2] - flops[1];
  const auto d3 = flops[3] - flops[2];
  CHECK(d1 == d2);
  CHECK(d2 == d3);
}

TEST_CASE("E-block bias shifts the local logits") {
  const auto inst = eva::test::random_instance(3, 8, 8, 3);
  const PartitionSpec partition = build_partition(8, 8, 4, 2, true);
  RFConfig cfg;
  cfg.mode = SampleMode::deterministic_mean;

  PracticalEvaOptions zero_bias;
  zero_bias.e_bias = Mat(4, 4);  // explicit zeros behave like no bias
  const EstimatorReport plain = practical_eva(inst, partition, cfg);
  const EstimatorReport zeroed = practical_eva(inst, partition, cfg, {}, zero_bias);
  CHECK(plain.output.data == zeroed.output.data);

  PracticalEvaOptions biased;
  biased.e_bias = Mat(4, 4);
  biased.e_bias(0, 3) = 2.5;
  const EstimatorReport shifted = practical_eva(inst, partition, cfg, {}, biased);
  CHECK(max_abs_diff(shifted.output, plain.output) > 1e-6);

  PracticalEvaOptions bad;
  bad.e_bias = Mat(3, 3);
  CHECK_THROWS_AS(practical_eva(inst, partition, cfg, {}, bad), std::invalid_argument);
}

TEST_CASE("scatterbrain limits: full support is softmax, empty support is performer") {
  const auto inst = eva::test::random_instance(21, 8, 8, 4);
  RFConfig cfg;
  cfg.samples = 12;
  cfg.seed = 4;

  std::vector<std::vector<std::size_t>> full(8);
  for (auto& set : full) {
    for (std::size_t m = 0; m < 8; ++m) set.push_back(m);
  }
  CHECK(max_abs_diff(scatterbrain(inst, full, cfg).output, softmax_attention(inst)) <= 1e-12);

  const std::vector<std::vector<std::size_t>> empty(8);
  CHECK(max_abs_diff(scatterbrain(inst, empty, cfg).output,
                     performer_attention(inst, cfg).output) <= 1e-12);
}

TEST_CASE("the shared-coefficient form collapses to scatterbrain for any beta") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = eva::test::random_instance(seed + 300, 10, 10, 4);
    const PartitionSpec partition = build_partition(10, 10, 2, 0, true);
    const auto e_sets = e_sets_from_partition(partition);
    RFConfig cfg;
    cfg.samples = 8;
    cfg.seed = seed;
    const EstimatorReport sb = scatterbrain(inst, e_sets, cfg);

    SeededRng rng(seed);
    const std::vector<double> zero(4, 0.0);
    std::vector<double> random_beta(4);
    for (double& b : random_beta) b = rng.next_gaussian();
    const std::vector<double> ratio_beta = snis_estimate(inst, 0, cfg).value;

    for (const auto& beta : {zero, random_beta, ratio_beta}) {
      const EstimatorReport cv = eva_shared_cv(inst, e_sets, cfg, beta);
      CHECK(max_abs_diff(cv.output, sb.output) <= 1e-10);
    }
  }
}

TEST_CASE("fault injection flips the group contribution and is observable") {
  const auto inst = eva::test::random_instance(10, 12, 12, 3);
  const PartitionSpec partition = build_partition(12, 12, 4, 2, true);
  RFConfig cfg;
  cfg.mode = SampleMode::deterministic_mean;

  const EstimatorReport healthy = practical_eva(inst, partition, cfg);
  testing::inject_fault(testing::Fault::eva_group_sign_flip);
  const EstimatorReport broken = practical_eva(inst, partition, cfg);
  testing::inject_fault(testing::Fault::none);

  CHECK(max_abs_diff(healthy.output, broken.output) > 1e-6);
  const EstimatorReport recovered = practical_eva(inst, partition, cfg);
  CHECK(recovered.output.data == healthy.output.data);
}

TEST_CASE("query-dependent groups are rejected by the linear-time paths") {
  const auto inst = eva::test::random_instance(2, 12, 12, 3);
  const PartitionSpec disjoint = build_partition(12, 12, 4, 2, false);
  RFConfig cfg;
  CHECK_THROWS_AS(practical_eva(inst, disjoint, cfg), std::invalid_argument);
  CHECK_THROWS_AS(group_summaries(inst, disjoint), std::invalid_argument);
}

TEST_SUITE_END();
