#pragma once

#include <cstdint>
#include <random>

#include "eva/mat.hpp"

namespace eva {

/// Deterministic Gaussian source. Uniform bits come from std::mt19937_64;
/// normals are produced by the Box-Muller transform with the spare value
/// cached, so a given seed yields the same draw sequence on the same build.
/// Single-owner: not safe to share across threads.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Uniform in [0, 1) with 53 random bits.
  double next_uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = 1.0 - next_uniform();
    const double u2 = next_uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// rows x cols matrix of independent N(mean, 1) entries. `mean` may be empty
/// (zero mean), a single row broadcast to every row, or a full rows x cols
/// matrix. Entries are drawn in row-major order.
Mat sample_gaussian(SeededRng& rng, std::size_t rows, std::size_t cols, const Mat& mean = Mat{});

}  // namespace eva
