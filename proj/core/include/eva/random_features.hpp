#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eva/attention.hpp"
#include "eva/mat.hpp"
#include "eva/report.hpp"

namespace eva {

enum class SampleMode {
  sample,              // omega_s = mu_s + z_s, z ~ N(0, I)
  deterministic_mean,  // omega_s = mu_s; seed ignored, output seed-invariant
};

/// How the Monte Carlo omegas are drawn. `proposal_mean` selects the Gaussian
/// proposal N(mu, I): zero rows means the standard normal, one row is
/// broadcast to all samples, otherwise one row per sample.
struct RFConfig {
  std::size_t samples = 1;  // S
  Mat proposal_mean;
  std::uint64_t seed = 0;
  SampleMode mode = SampleMode::sample;
};

/// Drawn omegas plus both log densities, each stored without the shared
/// (2*pi)^(d/2) normalizer (it cancels from every ratio the library forms).
struct RFSamples {
  Mat omegas;                       // S x d
  std::vector<double> log_normal;   // -||w_s||^2 / 2
  std::vector<double> log_proposal; // -||w_s - mu_s||^2 / 2

  std::size_t count() const { return omegas.rows; }
  double log_weight(std::size_t s) const { return log_normal[s] - log_proposal[s]; }
};

RFSamples draw_samples(const RFConfig& cfg, std::size_t dim);

/// log xi(x, w) = w.x - ||x||^2 / 2. The positive randomized mapping
/// satisfies E[xi(q,w) xi(k,w)] = exp(q.k) for w ~ N(0, I).
double log_xi(std::span<const double> x, std::span<const double> omega);

/// Random feature map: entry (i, s) = xi(x_i, w_s) / sqrt(S). Throws
/// std::overflow_error if any log xi exceeds 700 (exp would overflow).
Mat feature_map(const Mat& x, const RFSamples& samples);

/// Self-normalized importance sampling estimate of one attention row.
/// `g` and `h` are stored Z-free: both carry the (unknown) softmax normalizer
/// of the query row as a common factor, which cancels in `value` = g / h.
struct SnisResult {
  std::vector<double> value;  // d
  std::vector<double> g;      // d
  double h = 0.0;
};

SnisResult snis_estimate(const AttentionInstance& inst, std::size_t query_index, const RFConfig& cfg);

/// Vanilla random-feature attention (positive features, standard-normal
/// proposal required). Runs in O((N + M) S d).
EstimatorReport performer_attention(const AttentionInstance& inst, const RFConfig& cfg);

}  // namespace eva
