#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evabench/config.hpp"

namespace evabench {

struct BenchRecord {
  std::string estimator;
  std::size_t n = 0;
  std::int64_t median_ns = 0;
  std::int64_t p10_ns = 0;
  std::int64_t p90_ns = 0;
  std::uint64_t flop_estimate = 0;
  std::uint64_t peak_bytes_estimate = 0;
  std::optional<double> mse_vs_exact;
};

/// Times every (estimator, length) pair single-threaded: `warmup` discarded
/// runs, then `repeats` measured runs summarized by nearest-rank percentiles.
std::vector<BenchRecord> run_bench(const Config& cfg);

std::string bench_csv(const std::vector<BenchRecord>& records);
std::string bench_json(const std::vector<BenchRecord>& records);

/// Fits least squares log2(y) ~ a + slope * log2(x); the scaling exponent.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace evabench
