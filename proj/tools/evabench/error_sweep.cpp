#include "evabench/error_sweep.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "eva/causal.hpp"
#include "eva/estimators.hpp"
#include "eva/numerics.hpp"
#include "eva/rng.hpp"

#include <vector>

namespace evabench {

namespace {

using namespace eva;

AttentionInstance sweep_instance(std::uint64_t seed, std::size_t n, std::size_t d) {
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

double output_mse(const Mat& a, const Mat& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double diff = a.data[i] - b.data[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(a.data.size());
}

// Causally masked exact attention: query n attends to keys 0..n. The fair
// reference for the causal estimator.
Mat causal_softmax_attention(const AttentionInstance& inst) {
  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const std::size_t n_count = inst.num_queries();
  const std::size_t d = inst.dim();
  Mat out(n_count, d);
  std::vector<double> logits;
  for (std::size_t n = 0; n < n_count; ++n) {
    logits.resize(n + 1);
    for (std::size_t m = 0; m <= n; ++m) logits[m] = dot(qs.row(n), ks.row(m));
    const auto weights = stable_softmax(logits);
    for (std::size_t m = 0; m <= n; ++m) {
      for (std::size_t j = 0; j < d; ++j) out(n, j) += weights[m] * inst.V(m, j);
    }
  }
  return out;
}

// Exact normalizer per query for the surrogate diagnostic.
std::vector<double> exact_normalizers(const AttentionInstance& inst) {
  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  std::vector<double> z(inst.num_queries());
  std::vector<double> logits(inst.num_keys());
  for (std::size_t n = 0; n < inst.num_queries(); ++n) {
    for (std::size_t m = 0; m < inst.num_keys(); ++m) logits[m] = dot(qs.row(n), ks.row(m));
    z[n] = std::exp(logsumexp(logits));
  }
  return z;
}

}  // namespace

ErrorReport run_error_sweep(const Config& cfg) {
  for (const std::size_t n : cfg.lengths) {
    if (n > 4096) {
      throw ConfigError("error: lengths above 4096 need the exact reference; reduce N");
    }
  }

  ErrorReport report;
  for (const auto& name : cfg.estimators) {
    for (const std::size_t n : cfg.lengths) {
      double sum = 0.0, sum_sq = 0.0;
      double z_err_sum = 0.0;
      std::size_t z_count = 0;
      for (const std::uint64_t seed : cfg.seeds) {
        const AttentionInstance inst = sweep_instance(seed, n, cfg.d);
        const Mat exact = softmax_attention(inst);
        RFConfig rf;
        rf.samples = cfg.rf_samples;
        rf.seed = seed;

        Mat output;
        std::vector<double> z_estimates;
        if (name == "softmax") {
          output = exact;
        } else if (name == "performer") {
          output = performer_attention(inst, rf).output;
        } else if (name == "scatterbrain") {
          const auto e_sets = e_sets_from_partition(build_partition(n, n, cfg.k, 0, true));
          output = scatterbrain(inst, e_sets, rf).output;
        } else {
          const PartitionSpec partition = build_partition(n, n, cfg.k, cfg.c, true);
          if (name == "eva-ideal") {
            output = ideal_eva(inst, partition, rf).output;
          } else if (name == "eva-practical") {
            EstimatorReport rep = practical_eva(inst, partition, rf);
            output = std::move(rep.output);
            z_estimates = std::move(rep.z_estimates);
          } else if (name == "eva-causal") {
            output = causal_eva(inst, partition, rf).output;
          } else {
            throw ConfigError("error: unknown estimator '" + name + "'");
          }
        }

        ErrorRecord record;
        record.estimator = name;
        record.n = n;
        record.d = cfg.d;
        record.k = cfg.k;
        record.c = cfg.c;
        record.seed = seed;
        // The causal estimator approximates causally masked attention.
        record.mse = output_mse(output, name == "eva-causal" ? causal_softmax_attention(inst)
                                                             : exact);
        sum += record.mse;
        sum_sq += record.mse * record.mse;
        report.records.push_back(std::move(record));

        if (!z_estimates.empty()) {
          const std::vector<double> z_true = exact_normalizers(inst);
          for (std::size_t q = 0; q < z_true.size(); ++q) {
            z_err_sum += std::abs(z_estimates[q] - z_true[q]) / z_true[q];
          }
          z_count += z_true.size();
        }
      }

      ErrorAggregate agg;
      agg.estimator = name;
      agg.n = n;
      const double count = static_cast<double>(cfg.seeds.size());
      agg.mean_mse = sum / count;
      if (cfg.seeds.size() > 1) {
        const double var = (sum_sq - sum * sum / count) / (count - 1.0);
        agg.stderr_mse = std::sqrt(std::max(var, 0.0) / count);
      }
      if (z_count > 0) agg.mean_normalizer_rel_err = z_err_sum / static_cast<double>(z_count);
      report.aggregates.push_back(std::move(agg));
    }
  }
  return report;
}

std::string error_csv(const ErrorReport& report) {
  std::ostringstream out;
  out << "estimator,N,d,K,C,seed,mse\n";
  out.precision(17);
  for (const auto& r : report.records) {
    out << r.estimator << ',' << r.n << ',' << r.d << ',' << r.k << ',' << r.c << ',' << r.seed
        << ',' << r.mse << '\n';
  }
  return out.str();
}

std::string error_json(const ErrorReport& report) {
  nlohmann::ordered_json doc;
  doc["records"] = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    nlohmann::ordered_json entry;
    entry["estimator"] = r.estimator;
    entry["N"] = r.n;
    entry["d"] = r.d;
    entry["K"] = r.k;
    entry["C"] = r.c;
    entry["seed"] = r.seed;
    entry["mse"] = r.mse;
    doc["records"].push_back(entry);
  }
  doc["aggregates"] = nlohmann::ordered_json::array();
  for (const auto& a : report.aggregates) {
    nlohmann::ordered_json entry;
    entry["estimator"] = a.estimator;
    entry["N"] = a.n;
    entry["mean_mse"] = a.mean_mse;
    entry["stderr_mse"] = a.stderr_mse;
    if (a.mean_normalizer_rel_err > 0.0) {
      entry["mean_normalizer_rel_err"] = a.mean_normalizer_rel_err;
    }
    doc["aggregates"].push_back(entry);
  }
  return doc.dump(2) + "\n";
}

std::string error_aggregates_text(const ErrorReport& report) {
  std::ostringstream out;
  out.precision(6);
  for (const auto& a : report.aggregates) {
    out << a.estimator << " N=" << a.n << ": mean mse " << a.mean_mse << " (stderr "
        << a.stderr_mse << ")";
    if (a.mean_normalizer_rel_err > 0.0) {
      out << ", surrogate-normalizer rel err " << a.mean_normalizer_rel_err;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace evabench
