#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evabench {

struct InvariantResult {
  std::string id;
  bool pass = false;
  double worst_error = 0.0;
  std::string detail;
};

/// Runs the full invariant suite at the sizes and tolerances the library
/// guarantees. Deterministic given `base_seed`; no timing data is recorded so
/// two runs produce identical reports.
std::vector<InvariantResult> run_verification(std::uint64_t base_seed);

std::string verification_report_json(std::uint64_t base_seed,
                                     const std::vector<InvariantResult>& results);
std::string verification_report_csv(const std::vector<InvariantResult>& results);

}  // namespace evabench
