#include "eva/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eva {

double logsumexp(std::span<const double> values) {
  if (values.empty()) {
    throw std::domain_error("logsumexp: empty input");
  }
  const double max = *std::max_element(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - max);
  return max + std::log(acc);
}

std::vector<double> stable_softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw std::domain_error("stable_softmax: empty input");
  }
  const double max = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace eva
