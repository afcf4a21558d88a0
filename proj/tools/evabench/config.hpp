#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace evabench {

/// Raised for anything that should terminate with the usage/config exit code.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key = value configuration shared by the verify, bench, and error
/// commands. Grammar: one `key = value` per line, `#` starts a comment,
/// lists are comma-separated. Unknown keys are rejected.
struct Config {
  std::vector<std::size_t> lengths{512, 1024, 2048, 4096, 8192};
  std::size_t d = 32;
  std::size_t k = 64;
  std::size_t c = 32;
  std::vector<std::string> estimators{"softmax", "eva-practical"};
  std::vector<std::uint64_t> seeds{42};
  std::size_t repeats = 5;
  std::size_t warmup = 2;
  std::size_t rf_samples = 64;
  std::string output_path;  // empty: per-command default
  std::string format = "csv";
  bool format_explicit = false;  // set when the config or CLI named a format
  std::uint64_t seed = 42;  // base seed for the verification suite
  std::string fault;        // "" or "eva-group-sign-flip"
};

Config load_config(const std::string& path);

/// Estimator names accepted in the `estimators` list.
bool known_estimator(const std::string& name);

}  // namespace evabench
