#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "eva/testing.hpp"
#include "evabench/bench.hpp"
#include "evabench/config.hpp"
#include "evabench/error_sweep.hpp"
#include "evabench/io.hpp"
#include "evabench/verify.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitInvariantFailure = 1;
constexpr int kExitConfigError = 2;

struct CommonOptions {
  std::string config_path;
  std::string out_override;
  std::string format_override;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
};

evabench::Config load_with_overrides(const CommonOptions& opts) {
  evabench::Config cfg = evabench::load_config(opts.config_path);
  if (!opts.out_override.empty()) cfg.output_path = opts.out_override;
  if (!opts.format_override.empty()) {
    if (opts.format_override != "csv" && opts.format_override != "json") {
      throw evabench::ConfigError("--format must be csv or json");
    }
    cfg.format = opts.format_override;
    cfg.format_explicit = true;
  }
  if (opts.seed_set) {
    cfg.seed = opts.seed_override;
    cfg.seeds = {opts.seed_override};
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("config", opts.config_path, "configuration file")->required();
  cmd->add_option("--out", opts.out_override, "output path override");
  cmd->add_option("--format", opts.format_override, "csv or json");
  cmd->add_option("--seed", opts.seed_override, "seed override")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

int cmd_verify(const CommonOptions& opts) {
  const evabench::Config cfg = load_with_overrides(opts);
  if (cfg.fault == "eva-group-sign-flip") {
    eva::testing::inject_fault(eva::testing::Fault::eva_group_sign_flip);
  }
  const auto results = evabench::run_verification(cfg.seed);
  eva::testing::inject_fault(eva::testing::Fault::none);

  std::size_t failed = 0;
  for (const auto& result : results) {
    std::printf("[%s] %-38s worst_error=%.3e  %s\n", result.pass ? "PASS" : "FAIL",
                result.id.c_str(), result.worst_error, result.detail.c_str());
    if (!result.pass) ++failed;
  }

  // The verify report is JSON unless a format was explicitly requested.
  const bool csv = cfg.format_explicit && cfg.format == "csv";
  std::string out_path = cfg.output_path;
  if (out_path.empty()) out_path = csv ? "verify_report.csv" : "verify_report.json";
  const std::string content = csv ? evabench::verification_report_csv(results)
                                  : evabench::verification_report_json(cfg.seed, results);
  evabench::atomic_write(out_path, content);
  std::printf("%zu/%zu invariants passed; report written to %s\n", results.size() - failed,
              results.size(), out_path.c_str());
  if (failed > 0) {
    std::printf("FAILED invariants:");
    for (const auto& result : results) {
      if (!result.pass) std::printf(" %s", result.id.c_str());
    }
    std::printf("\n");
    return kExitInvariantFailure;
  }
  return kExitPass;
}

int cmd_bench(const CommonOptions& opts) {
  const evabench::Config cfg = load_with_overrides(opts);
  const auto records = evabench::run_bench(cfg);
  std::string out_path = cfg.output_path;
  if (out_path.empty()) out_path = cfg.format == "csv" ? "bench.csv" : "bench.json";
  evabench::atomic_write(out_path, cfg.format == "csv" ? evabench::bench_csv(records)
                                                       : evabench::bench_json(records));
  std::printf("%zu records written to %s\n", records.size(), out_path.c_str());
  return kExitPass;
}

int cmd_error(const CommonOptions& opts) {
  const evabench::Config cfg = load_with_overrides(opts);
  const auto report = evabench::run_error_sweep(cfg);
  std::string out_path = cfg.output_path;
  if (out_path.empty()) out_path = cfg.format == "csv" ? "error.csv" : "error.json";
  evabench::atomic_write(out_path, cfg.format == "csv" ? evabench::error_csv(report)
                                                       : evabench::error_json(report));
  std::cout << evabench::error_aggregates_text(report);
  std::printf("%zu records written to %s\n", report.records.size(), out_path.c_str());
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"random-feature attention verification and benchmark harness"};
  app.require_subcommand(1);

  CommonOptions verify_opts, bench_opts, error_opts;
  CLI::App* verify = app.add_subcommand("verify", "run the invariant suite");
  add_common(verify, verify_opts);
  CLI::App* bench = app.add_subcommand("bench", "runtime scaling benchmark");
  add_common(bench, bench_opts);
  CLI::App* error = app.add_subcommand("error", "approximation-error sweep");
  add_common(error, error_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  try {
    if (verify->parsed()) return cmd_verify(verify_opts);
    if (bench->parsed()) return cmd_bench(bench_opts);
    if (error->parsed()) return cmd_error(error_opts);
  } catch (const evabench::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  return kExitConfigError;
}
