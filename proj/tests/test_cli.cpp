#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBinary = EVABENCH_PATH;

struct RunResult {
  int exit_code = -1;
  std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "evabench_cli_test.log";
  const std::string command = kBinary + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(command.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(status);
  std::ifstream in(log);
  std::stringstream buffer;
  buffer << in.rdbuf();
  result.stdout_text = buffer.str();
  return result;
}

fs::path write_config(const std::string& name, const std::string& content) {
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("missing or malformed configs exit with the usage code") {
  CHECK(run_cli("verify /nonexistent/path.cfg").exit_code == 2);
  CHECK(run_cli("bench /nonexistent/path.cfg").exit_code == 2);

  const fs::path bad_key = write_config("bad_key.cfg", "no_such_key = 1\n");
  CHECK(run_cli("verify " + bad_key.string()).exit_code == 2);

  const fs::path bad_repeats =
      write_config("bad_repeats.cfg", "repeats = 2\nlengths = 32\n");
  CHECK(run_cli("bench " + bad_repeats.string()).exit_code == 2);

  const fs::path bad_order = write_config("bad_order.cfg", "lengths = 64, 32\n");
  CHECK(run_cli("bench " + bad_order.string()).exit_code == 2);

  CHECK(run_cli("frobnicate whatever.cfg").exit_code == 2);
}

TEST_CASE("error sweep: schema, exactness limit, and byte-stable output") {
  const fs::path out = fs::temp_directory_path() / "cli_error.csv";
  const fs::path cfg = write_config("error_sweep.cfg",
                                    "lengths = 32\n"
                                    "d = 8\n"
                                    "K = 32\n"
                                    "C = 0\n"
                                    "estimators = eva-ideal\n"
                                    "seeds = 1, 2, 3\n"
                                    "rf_samples = 4\n");
  const RunResult first = run_cli("error " + cfg.string() + " --out " + out.string());
  REQUIRE(first.exit_code == 0);

  const std::string content = read_file(out);
  CHECK(content.rfind("estimator,N,d,K,C,seed,mse\n", 0) == 0);

  // K = M: the estimator is exact, so the mse column is numerically zero.
  std::stringstream lines(content);
  std::string line;
  std::getline(lines, line);  // header
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    const auto last_comma = line.rfind(',');
    const double mse = std::stod(line.substr(last_comma + 1));
    CHECK(mse <= 1e-20);
  }
  CHECK(rows == 3);

  const RunResult second = run_cli("error " + cfg.string() + " --out " + out.string());
  REQUIRE(second.exit_code == 0);
  CHECK(read_file(out) == content);  // identical bytes: no timing data inside
}

TEST_CASE("error sweep: more samples give lower performer error") {
  const fs::path out = fs::temp_directory_path() / "cli_error_perf.json";
  std::ostringstream seeds;
  seeds << "seeds = 0";
  for (int s = 1; s < 50; ++s) seeds << ", " << s;

  auto mean_mse = [&](std::size_t samples) {
    const fs::path cfg = write_config(
        "error_performer_" + std::to_string(samples) + ".cfg",
        "lengths = 24\nd = 6\nK = 4\nC = 2\nestimators = performer\nrf_samples = " +
            std::to_string(samples) + "\nformat = json\n" + seeds.str() + "\n");
    const RunResult run = run_cli("error " + cfg.string() + " --out " + out.string());
    REQUIRE(run.exit_code == 0);
    const auto doc = nlohmann::json::parse(read_file(out));
    return doc["aggregates"][0]["mean_mse"].get<double>();
  };
  CHECK(mean_mse(100) < mean_mse(1));
}

TEST_CASE("error sweep rejects lengths that need an oversized exact reference") {
  const fs::path cfg = write_config("error_too_big.cfg", "lengths = 8192\n");
  CHECK(run_cli("error " + cfg.string()).exit_code == 2);
}

TEST_CASE("bench: row count and percentile ordering") {
  const fs::path out = fs::temp_directory_path() / "cli_bench.csv";
  const fs::path cfg = write_config("bench_small.cfg",
                                    "lengths = 32, 64\n"
                                    "d = 8\n"
                                    "K = 8\n"
                                    "C = 4\n"
                                    "estimators = softmax, eva-practical\n"
                                    "repeats = 5\n"
                                    "warmup = 1\n"
                                    "seeds = 7\n");
  const RunResult run = run_cli("bench " + cfg.string() + " --out " + out.string());
  REQUIRE(run.exit_code == 0);

  std::stringstream lines(read_file(out));
  std::string line;
  std::getline(lines, line);
  CHECK(line ==
        "estimator,N,median_ns,p10_ns,p90_ns,flop_estimate,peak_bytes_estimate,mse_vs_exact");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    std::stringstream fields(line);
    std::string estimator, n, median, p10, p90;
    std::getline(fields, estimator, ',');
    std::getline(fields, n, ',');
    std::getline(fields, median, ',');
    std::getline(fields, p10, ',');
    std::getline(fields, p90, ',');
    CHECK(std::stoll(p10) <= std::stoll(median));
    CHECK(std::stoll(median) <= std::stoll(p90));
  }
  CHECK(rows == 4);  // 2 estimators x 2 lengths
}

TEST_CASE("bench emits json mirroring the csv fields") {
  const fs::path out = fs::temp_directory_path() / "cli_bench.json";
  const fs::path cfg = write_config("bench_json.cfg",
                                    "lengths = 32, 64\n"
                                    "d = 8\n"
                                    "K = 8\n"
                                    "C = 4\n"
                                    "estimators = performer, eva-causal\n"
                                    "repeats = 3\n"
                                    "warmup = 1\n"
                                    "rf_samples = 8\n"
                                    "seeds = 7\n");
  const RunResult run = run_cli("bench " + cfg.string() + " --format json --out " + out.string());
  REQUIRE(run.exit_code == 0);
  const auto doc = nlohmann::json::parse(read_file(out));
  REQUIRE(doc["records"].size() == 4);
  for (const auto& record : doc["records"]) {
    CHECK(record.contains("median_ns"));
    CHECK(record.contains("flop_estimate"));
    CHECK(record.contains("peak_bytes_estimate"));
    CHECK(record["p10_ns"].get<std::int64_t>() <= record["median_ns"].get<std::int64_t>());
  }
}

TEST_CASE("verify supports csv reports and the seed override") {
  const fs::path out = fs::temp_directory_path() / "cli_verify.csv";
  const fs::path cfg = write_config("verify_csv.cfg", "seed = 11\n");
  const RunResult run =
      run_cli("verify " + cfg.string() + " --seed 42 --format csv --out " + out.string());
  REQUIRE(run.exit_code == 0);
  std::stringstream lines(read_file(out));
  std::string line;
  std::getline(lines, line);
  CHECK(line == "invariant_id,pass,worst_error,detail");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.find(",true,") != std::string::npos);
  }
  CHECK(rows >= 25);
}

TEST_CASE("fault injection makes verify fail and name the invariant") {
  const fs::path out = fs::temp_directory_path() / "cli_verify_fault.json";
  const fs::path cfg = write_config("verify_fault.cfg",
                                    "seed = 42\n"
                                    "fault = eva-group-sign-flip\n");
  const RunResult run = run_cli("verify " + cfg.string() + " --out " + out.string());
  CHECK(run.exit_code == 1);
  CHECK(run.stdout_text.find("FAILED invariants:") != std::string::npos);
  CHECK(run.stdout_text.find("eva-convex-hull") != std::string::npos);

  const auto doc = nlohmann::json::parse(read_file(out));
  CHECK(doc["invariants"].size() >= 25);  // one entry per invariant id
  bool named = false;
  for (const auto& entry : doc["invariants"]) {
    if (!entry["pass"].get<bool>()) named = true;
  }
  CHECK(named);
  CHECK(doc["summary"]["failed"].get<int>() >= 1);
}

TEST_SUITE_END();
