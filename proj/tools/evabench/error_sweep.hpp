#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evabench/config.hpp"

namespace evabench {

struct ErrorRecord {
  std::string estimator;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t k = 0;
  std::size_t c = 0;
  std::uint64_t seed = 0;
  double mse = 0.0;
};

struct ErrorAggregate {
  std::string estimator;
  std::size_t n = 0;
  double mean_mse = 0.0;
  double stderr_mse = 0.0;
  double mean_normalizer_rel_err = 0.0;  // surrogate-normalizer diagnostic
};

struct ErrorReport {
  std::vector<ErrorRecord> records;
  std::vector<ErrorAggregate> aggregates;
};

/// Approximation-error sweep: every (estimator, length, seed) against exact
/// softmax attention. Lengths above 4096 are rejected (exact reference cost).
ErrorReport run_error_sweep(const Config& cfg);

std::string error_csv(const ErrorReport& report);
std::string error_json(const ErrorReport& report);
std::string error_aggregates_text(const ErrorReport& report);

}  // namespace evabench
