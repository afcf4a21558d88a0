#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "eva/attention.hpp"
#include "eva/mat.hpp"
#include "eva/rng.hpp"

namespace eva::test {

inline Mat random_mat(SeededRng& rng, std::size_t rows, std::size_t cols) {
  Mat out(rows, cols);
  for (double& v : out.data) v = rng.next_gaussian();
  return out;
}

inline Mat random_unit_rows(SeededRng& rng, std::size_t rows, std::size_t cols) {
  Mat out = random_mat(rng, rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double norm = std::sqrt(squared_norm(out.row(r)));
    for (std::size_t j = 0; j < cols; ++j) out(r, j) /= norm;
  }
  return out;
}

/// Unit-norm rows, default 1/sqrt(d) scaling.
inline AttentionInstance random_instance(std::uint64_t seed, std::size_t n, std::size_t m,
                                         std::size_t d) {
  SeededRng rng(seed);
  Mat q = random_unit_rows(rng, n, d);
  Mat k = random_unit_rows(rng, m, d);
  Mat v = random_unit_rows(rng, m, d);
  return AttentionInstance(std::move(q), std::move(k), std::move(v));
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  }
  return worst;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline double mse(const Mat& a, const Mat& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double diff = a.data[i] - b.data[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(a.data.size());
}

}  // namespace eva::test
