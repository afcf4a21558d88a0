#pragma once

#include <cstdint>

#include "eva/mat.hpp"

namespace eva {

/// Output of a randomized attention estimator plus diagnostics.
///
/// `z_estimates` holds the per-query normalizer the estimator actually
/// divided by (exact, surrogate, or random-feature estimate depending on the
/// estimator). `group_betas` / `omegas_used` hold the group coefficients and
/// the omega draws; estimators whose coefficients are query-dependent store
/// the first query's coefficients as a diagnostic. `flop_estimate` is an
/// analytic operation count, not a measurement.
struct EstimatorReport {
  Mat output;
  std::vector<double> z_estimates;
  Mat group_betas;
  Mat omegas_used;
  std::int64_t wallclock_ns = 0;
  std::uint64_t flop_estimate = 0;
};

/// Analytic cost model shared by the estimators and the benchmark harness.
///
/// Flop counts tally multiply/add/exp operations of the straightforward
/// implementation; peak byte counts tally the f64 buffers live at the high
/// water mark (inputs, outputs, and the largest scratch). Both are exact
/// integer formulas of the problem sizes, so complexity assertions can be
/// made on the counters themselves:
///
///   softmax_attention   peak = 8*(N*d + 2*M*d + N*M + N*d)          [quadratic]
///   performer           peak = 8*(N*d + 2*M*d + (N+M)*S + S*d + S + N*d + N)
///   practical EVA       peak = 8*((N+2*M+N)*d + 4*C*d + (K+C) + C + N)  [linear]
///   causal EVA          practical + 8*(K*K + C*C) for the two masks
///   ideal EVA           peak = 8*((N+2*M+N)*d + S*d + S*M + 2*S + C*(d+1) + M)
///   scatterbrain        peak = 8*((N+2*M+N)*d + (N+M)*S + S*d + M + N)
namespace cost {

std::uint64_t softmax_attention_flops(std::size_t n, std::size_t m, std::size_t d);
std::uint64_t softmax_attention_peak_bytes(std::size_t n, std::size_t m, std::size_t d);

std::uint64_t performer_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t s);
std::uint64_t performer_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t s);

std::uint64_t practical_eva_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t sum_e_sizes,
                                  std::size_t c);
std::uint64_t practical_eva_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t k,
                                       std::size_t c);

std::uint64_t causal_eva_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t sum_e_sizes,
                               std::size_t c);
std::uint64_t causal_eva_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t k,
                                    std::size_t c);

std::uint64_t ideal_eva_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t s, std::size_t c);
std::uint64_t ideal_eva_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t s,
                                   std::size_t c);

std::uint64_t scatterbrain_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t s);
std::uint64_t scatterbrain_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t s);

}  // namespace cost

}  // namespace eva
