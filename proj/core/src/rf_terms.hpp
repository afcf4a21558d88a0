#pragma once

// Shared internals for the SNIS / decomposition code paths. Everything here
// works in the log domain on the scaled q', k' rows; per-query sums are
// stabilized by one shift shared across samples and keys, so every ratio and
// per-key term keeps its exact algebraic relations.

#include <vector>

#include "eva/attention.hpp"
#include "eva/random_features.hpp"

namespace eva::detail {

// Query-independent pieces of the log terms.
struct SampleKeyTable {
  Mat wk;                        // S x M: w_s . k'_m
  std::vector<double> key_sq;    // ||k'_m||^2
  std::vector<double> log_alpha; // -log S + log N(w_s;0,I) - log q(w_s)
};

SampleKeyTable build_sample_key_table(const Mat& scaled_keys, const RFSamples& samples);

// log alpha_s + log xi(q'_n, w_s) for every sample, for one query row.
std::vector<double> query_sample_base(const Mat& scaled_queries, std::size_t query_index,
                                      const RFSamples& samples, const SampleKeyTable& table);

// Full log term for (s, m): base_s + w_s . k'_m - ||k'_m||^2 / 2.
inline double log_term(const SampleKeyTable& table, const std::vector<double>& base, std::size_t s,
                       std::size_t m) {
  return base[s] + table.wk(s, m) - 0.5 * table.key_sq[m];
}

// Max of log_term over all (s, m); the stabilization shift for this query.
double max_log_term(const SampleKeyTable& table, const std::vector<double>& base);

}  // namespace eva::detail
