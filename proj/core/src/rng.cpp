#include "eva/rng.hpp"

#include <stdexcept>

namespace eva {

Mat sample_gaussian(SeededRng& rng, std::size_t rows, std::size_t cols, const Mat& mean) {
  const bool has_mean = !mean.empty();
  if (has_mean && mean.cols != cols) {
    throw std::invalid_argument("sample_gaussian: mean column count mismatch");
  }
  if (has_mean && mean.rows != 1 && mean.rows != rows) {
    throw std::invalid_argument("sample_gaussian: mean must have 1 row or `rows` rows");
  }

  Mat out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t mean_row = (has_mean && mean.rows > 1) ? i : 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double mu = has_mean ? mean(mean_row, j) : 0.0;
      out(i, j) = mu + rng.next_gaussian();
    }
  }
  return out;
}

}  // namespace eva
