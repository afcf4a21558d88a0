#include "evabench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "json.hpp"

#include "eva/causal.hpp"
#include "eva/estimators.hpp"
#include "eva/rng.hpp"

namespace evabench {

namespace {

using namespace eva;
using clock = std::chrono::steady_clock;

AttentionInstance bench_instance(std::uint64_t seed, std::size_t n, std::size_t d) {
  SeededRng rng(seed);
  Mat q(n, d), k(n, d), v(n, d);
  for (double& x : q.data) x = rng.next_gaussian();
  for (double& x : k.data) x = rng.next_gaussian();
  for (double& x : v.data) x = rng.next_gaussian();
  for (Mat* m : {&q, &k, &v}) {
    for (std::size_t r = 0; r < n; ++r) {
      const double norm = std::sqrt(squared_norm(m->row(r)));
      for (std::size_t j = 0; j < d; ++j) (*m)(r, j) /= norm;
    }
  }
  return AttentionInstance(std::move(q), std::move(k), std::move(v));
}

struct Runner {
  std::function<void()> run;
  std::uint64_t flops = 0;
  std::uint64_t peak_bytes = 0;
};

Runner make_runner(const std::string& name, const AttentionInstance& inst, const Config& cfg,
                   std::size_t n) {
  const std::size_t d = cfg.d;
  Runner runner;
  if (name == "softmax") {
    runner.run = [&inst] { softmax_attention(inst); };
    runner.flops = cost::softmax_attention_flops(n, n, d);
    runner.peak_bytes = cost::softmax_attention_peak_bytes(n, n, d);
    return runner;
  }
  RFConfig rf;
  rf.samples = cfg.rf_samples;
  rf.seed = cfg.seeds.front();
  if (name == "performer") {
    runner.run = [&inst, rf] { performer_attention(inst, rf); };
    runner.flops = cost::performer_flops(n, n, d, rf.samples);
    runner.peak_bytes = cost::performer_peak_bytes(n, n, d, rf.samples);
    return runner;
  }
  if (name == "scatterbrain") {
    const auto e_sets = e_sets_from_partition(build_partition(n, n, cfg.k, 0, true));
    runner.run = [&inst, rf, e_sets] { scatterbrain(inst, e_sets, rf); };
    runner.flops = cost::scatterbrain_flops(n, n, d, rf.samples);
    runner.peak_bytes = cost::scatterbrain_peak_bytes(n, n, d, rf.samples);
    return runner;
  }
  const PartitionSpec partition = build_partition(n, n, cfg.k, cfg.c, true);
  if (name == "eva-ideal") {
    runner.run = [&inst, partition, rf] { ideal_eva(inst, partition, rf); };
    runner.flops = cost::ideal_eva_flops(n, n, d, rf.samples, cfg.c);
    runner.peak_bytes = cost::ideal_eva_peak_bytes(n, n, d, rf.samples, cfg.c);
    return runner;
  }
  if (name == "eva-practical") {
    runner.run = [&inst, partition, rf] { practical_eva(inst, partition, rf); };
  } else if (name == "eva-causal") {
    runner.run = [&inst, partition, rf] { causal_eva(inst, partition, rf); };
  } else {
    throw ConfigError("bench: unknown estimator '" + name + "'");
  }
  std::size_t sum_e = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const auto [b, e] = partition.e_range(q);
    sum_e += e - b;
  }
  if (name == "eva-practical") {
    runner.flops = cost::practical_eva_flops(n, n, d, sum_e, cfg.c);
    runner.peak_bytes = cost::practical_eva_peak_bytes(n, n, d, cfg.k, cfg.c);
  } else {
    runner.flops = cost::causal_eva_flops(n, n, d, sum_e, cfg.c);
    runner.peak_bytes = cost::causal_eva_peak_bytes(n, n, d, cfg.k, cfg.c);
  }
  return runner;
}

std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, double quantile) {
  const auto index = static_cast<std::size_t>(quantile * (sorted.size() - 1) + 0.5);
  return sorted[std::min(index, sorted.size() - 1)];
}

}  // namespace

std::vector<BenchRecord> run_bench(const Config& cfg) {
  std::vector<BenchRecord> records;
  for (const auto& name : cfg.estimators) {
    for (const std::size_t n : cfg.lengths) {
      const AttentionInstance inst = bench_instance(cfg.seeds.front(), n, cfg.d);
      const Runner runner = make_runner(name, inst, cfg, n);
      for (std::size_t w = 0; w < cfg.warmup; ++w) runner.run();
      std::vector<std::int64_t> times(cfg.repeats);
      for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const auto start = clock::now();
        runner.run();
        times[r] =
            std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - start).count();
      }
      std::sort(times.begin(), times.end());
      BenchRecord record;
      record.estimator = name;
      record.n = n;
      record.p10_ns = nearest_rank(times, 0.10);
      record.median_ns = nearest_rank(times, 0.50);
      record.p90_ns = nearest_rank(times, 0.90);
      record.flop_estimate = runner.flops;
      record.peak_bytes_estimate = runner.peak_bytes;
      records.push_back(std::move(record));
    }
  }
  return records;
}

std::string bench_csv(const std::vector<BenchRecord>& records) {
  std::ostringstream out;
  out << "estimator,N,median_ns,p10_ns,p90_ns,flop_estimate,peak_bytes_estimate,mse_vs_exact\n";
  out.precision(17);
  for (const auto& r : records) {
    out << r.estimator << ',' << r.n << ',' << r.median_ns << ',' << r.p10_ns << ',' << r.p90_ns
        << ',' << r.flop_estimate << ',' << r.peak_bytes_estimate << ',';
    if (r.mse_vs_exact) out << *r.mse_vs_exact;
    out << '\n';
  }
  return out.str();
}

std::string bench_json(const std::vector<BenchRecord>& records) {
  nlohmann::ordered_json report;
  report["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json entry;
    entry["estimator"] = r.estimator;
    entry["N"] = r.n;
    entry["median_ns"] = r.median_ns;
    entry["p10_ns"] = r.p10_ns;
    entry["p90_ns"] = r.p90_ns;
    entry["flop_estimate"] = r.flop_estimate;
    entry["peak_bytes_estimate"] = r.peak_bytes_estimate;
    if (r.mse_vs_exact) entry["mse_vs_exact"] = *r.mse_vs_exact;
    report["records"].push_back(entry);
  }
  return report.dump(2) + "\n";
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t count = x.size();
  double mean_x = 0.0, mean_y = 0.0;
  std::vector<double> lx(count), ly(count);
  for (std::size_t i = 0; i < count; ++i) {
    lx[i] = std::log2(x[i]);
    ly[i] = std::log2(y[i]);
    mean_x += lx[i];
    mean_y += ly[i];
  }
  mean_x /= static_cast<double>(count);
  mean_y /= static_cast<double>(count);
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    cov += (lx[i] - mean_x) * (ly[i] - mean_y);
    var += (lx[i] - mean_x) * (lx[i] - mean_x);
  }
  return cov / var;
}

}  // namespace evabench
