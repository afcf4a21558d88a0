#include <cmath>
#include <vector>

#include "doctest.h"
#include "eva/random_features.hpp"
#include "helpers.hpp"

using namespace eva;
using eva::test::max_abs_diff;

TEST_SUITE_BEGIN("random-features");

TEST_CASE("log_xi closed-form cases") {
  const std::vector<double> zero{0.0, 0.0, 0.0};
  const std::vector<double> x{1.0, -2.0, 0.5};
  const std::vector<double> omega{0.3, 0.1, -0.2};
  CHECK(log_xi(zero, omega) == 0.0);
  CHECK(log_xi(x, zero) == doctest::Approx(-0.5 * (1.0 + 4.0 + 0.25)).epsilon(1e-15));
  CHECK_THROWS_AS(log_xi(std::vector<double>{1.0}, omega), std::invalid_argument);
}

TEST_CASE("xi products are unbiased estimates of the exponential kernel") {
  // MC oracle for the kernel identity, 1e6 standard-normal draws per pair.
  SeededRng pair_rng(21);
  for (int pair = 0; pair < 3; ++pair) {
    const Mat q = eva::test::random_unit_rows(pair_rng, 1, 3);
    const Mat k = eva::test::random_unit_rows(pair_rng, 1, 3);
    const double target = std::exp(dot(q.row(0), k.row(0)));

    SeededRng rng(1000 + pair);
    const std::size_t draws = 1'000'000;
    double acc = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      std::vector<double> omega(3);
      for (double& w : omega) w = rng.next_gaussian();
      acc += std::exp(log_xi(q.row(0), omega) + log_xi(k.row(0), omega));
    }
    acc /= static_cast<double>(draws);
    CHECK(std::abs(acc - target) / target < 0.01);
  }
}

TEST_CASE("feature_map matches a scalar transcription") {
  RFConfig cfg;
  cfg.samples = 4;
  cfg.seed = 9;
  const RFSamples samples = draw_samples(cfg, 2);
  SeededRng rng(2);
  const Mat x = eva::test::random_mat(rng, 3, 2);
  const Mat features = feature_map(x, samples);

  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t s = 0; s < 4; ++s) {
      double dot_wx = 0.0, x_sq = 0.0;
      for (std::size_t j = 0; j < 2; ++j) {
        dot_wx += samples.omegas(s, j) * x(i, j);
        x_sq += x(i, j) * x(i, j);
      }
      const double expected = std::exp(dot_wx - 0.5 * x_sq) / std::sqrt(4.0);
      CHECK(features(i, s) == expected);
    }
  }
}

TEST_CASE("feature_map edge rows") {
  RFConfig cfg;
  cfg.samples = 5;
  cfg.seed = 1;
  const RFSamples samples = draw_samples(cfg, 3);
  Mat x(1, 3);  // zero row
  const Mat features = feature_map(x, samples);
  for (std::size_t s = 0; s < 5; ++s) {
    CHECK(features(0, s) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-15));
  }

  RFConfig mean_cfg;
  mean_cfg.samples = 1;
  mean_cfg.mode = SampleMode::deterministic_mean;  // standard normal mean: omega = 0
  const RFSamples zero_omega = draw_samples(mean_cfg, 3);
  Mat y(2, 3, {1.0, 2.0, 3.0, -1.0, 0.0, 1.0});
  const Mat column = feature_map(y, zero_omega);
  CHECK(column(0, 0) == doctest::Approx(std::exp(-0.5 * 14.0)).epsilon(1e-15));
  CHECK(column(1, 0) == doctest::Approx(std::exp(-0.5 * 2.0)).epsilon(1e-15));
}

TEST_CASE("feature_map flags exp overflow") {
  RFSamples samples;
  samples.omegas = Mat(1, 1, {40.0});
  samples.log_normal = {0.0};
  samples.log_proposal = {0.0};
  Mat x(1, 1, {30.0});  // log xi = 1200 - 450 > 700
  CHECK_THROWS_AS(feature_map(x, samples), std::overflow_error);
}

TEST_CASE("performer cancellation limits hold for any seed") {
  for (std::uint64_t seed : {0ull, 5ull, 17ull}) {
    RFConfig cfg;
    cfg.samples = 3;
    cfg.seed = seed;

    // Single key: the ratio collapses to v_1.
    SeededRng rng(31);
    const Mat q = eva::test::random_mat(rng, 4, 3);
    const Mat k1 = eva::test::random_mat(rng, 1, 3);
    const Mat v1 = eva::test::random_mat(rng, 1, 3);
    const AttentionInstance single(q, k1, v1);
    const EstimatorReport rep = performer_attention(single, cfg);
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK(max_abs_diff(rep.output.row(n), v1.row(0)) <= 1e-12);
    }

    // Identical keys: column mean of V.
    Mat k(5, 3);
    for (std::size_t m = 0; m < 5; ++m) {
      for (std::size_t j = 0; j < 3; ++j) k(m, j) = k1(0, j);
    }
    const Mat v = eva::test::random_mat(rng, 5, 3);
    const AttentionInstance uniform(q, k, v);
    const EstimatorReport urep = performer_attention(uniform, cfg);
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (std::size_t m = 0; m < 5; ++m) mean += v(m, j);
      mean /= 5.0;
      for (std::size_t n = 0; n < 4; ++n) CHECK(urep.output(n, j) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("performer converges to exact attention") {
  const auto inst = eva::test::random_instance(7, 16, 16, 4);
  const Mat exact = softmax_attention(inst);
  RFConfig cfg;
  cfg.samples = 10'000;
  cfg.seed = 3;
  const EstimatorReport rep = performer_attention(inst, cfg);
  CHECK(max_abs_diff(rep.output, exact) < 0.05);
}

TEST_CASE("performer requires the standard-normal proposal") {
  const auto inst = eva::test::random_instance(1, 3, 3, 2);
  RFConfig cfg;
  cfg.samples = 2;
  cfg.proposal_mean = Mat(1, 2, {1.0, 0.0});
  CHECK_THROWS_AS(performer_attention(inst, cfg), std::invalid_argument);
}

TEST_CASE("performer output is bit-stable under identical configs") {
  const auto inst = eva::test::random_instance(2, 6, 6, 3);
  RFConfig cfg;
  cfg.samples = 32;
  cfg.seed = 77;
  const EstimatorReport a = performer_attention(inst, cfg);
  const EstimatorReport b = performer_attention(inst, cfg);
  CHECK(a.output.data == b.output.data);
  CHECK(a.z_estimates == b.z_estimates);
}

TEST_CASE("snis with the standard-normal proposal is performer row by row") {
  const auto inst = eva::test::random_instance(13, 5, 7, 3);
  RFConfig cfg;
  cfg.samples = 16;
  cfg.seed = 5;
  const EstimatorReport rep = performer_attention(inst, cfg);
  for (std::size_t n = 0; n < inst.num_queries(); ++n) {
    const SnisResult snis = snis_estimate(inst, n, cfg);
    CHECK(max_abs_diff(snis.value, rep.output.row(n)) <= 1e-12);
    for (std::size_t j = 0; j < inst.dim(); ++j) {
      CHECK(snis.value[j] == doctest::Approx(snis.g[j] / snis.h).epsilon(1e-15));
    }
  }
}

TEST_CASE("snis single-key estimate is exact") {
  SeededRng rng(41);
  const Mat q = eva::test::random_mat(rng, 2, 3);
  const Mat k = eva::test::random_mat(rng, 1, 3);
  const Mat v = eva::test::random_mat(rng, 1, 3);
  const AttentionInstance inst(q, k, v);
  RFConfig cfg;
  cfg.samples = 4;
  cfg.seed = 8;
  cfg.proposal_mean = Mat(1, 3, {0.5, -0.2, 0.1});
  const SnisResult snis = snis_estimate(inst, 0, cfg);
  CHECK(max_abs_diff(snis.value, v.row(0)) <= 1e-12);
}

TEST_CASE("snis batch means agree with exact attention under a shifted proposal") {
  // 1e5 total samples split into 20 batches; the batch-mean spread gives the
  // MC standard error.
  const AttentionInstance inst(Mat(1, 2, {0.4, -0.3}), Mat(2, 2, {0.9, 0.1, -0.5, 0.6}),
                               Mat(2, 2, {1.0, 0.0, 0.0, 1.0}), 1.0);
  const std::vector<double> exact = attention_weight_row(inst, 0);  // V = I: output = weights
  Mat shifted_mean(1, 2);
  for (std::size_t j = 0; j < 2; ++j) shifted_mean(0, j) = inst.Q(0, j) + inst.K(0, j);

  const std::size_t batches = 20;
  Mat batch_values(batches, 2);
  for (std::size_t b = 0; b < batches; ++b) {
    RFConfig cfg;
    cfg.samples = 5000;
    cfg.seed = 900 + b;
    cfg.proposal_mean = shifted_mean;
    const SnisResult snis = snis_estimate(inst, 0, cfg);
    for (std::size_t j = 0; j < 2; ++j) batch_values(b, j) = snis.value[j];
  }
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0.0;
    for (std::size_t b = 0; b < batches; ++b) mean += batch_values(b, j);
    mean /= static_cast<double>(batches);
    double var = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      var += (batch_values(b, j) - mean) * (batch_values(b, j) - mean);
    }
    const double se = std::sqrt(var / (batches - 1.0) / batches);
    CHECK(std::abs(mean - exact[j]) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("deterministic-mean mode ignores the seed") {
  const auto inst = eva::test::random_instance(3, 4, 4, 3);
  RFConfig a;
  a.samples = 6;
  a.seed = 1;
  a.mode = SampleMode::deterministic_mean;
  RFConfig b = a;
  b.seed = 999;
  CHECK(performer_attention(inst, a).output.data == performer_attention(inst, b).output.data);
  CHECK(snis_estimate(inst, 1, a).value == snis_estimate(inst, 1, b).value);
}

TEST_CASE("config validation") {
  RFConfig cfg;
  cfg.samples = 0;
  CHECK_THROWS_AS(draw_samples(cfg, 3), std::invalid_argument);
  cfg.samples = 4;
  cfg.proposal_mean = Mat(2, 3);  // neither 1 nor S rows
  CHECK_THROWS_AS(draw_samples(cfg, 3), std::invalid_argument);
  cfg.proposal_mean = Mat(4, 2);  // wrong dimension
  CHECK_THROWS_AS(draw_samples(cfg, 3), std::invalid_argument);
}

TEST_SUITE_END();
