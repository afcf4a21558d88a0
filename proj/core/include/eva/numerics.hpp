#pragma once

#include <span>
#include <vector>

namespace eva {

/// log(sum_i exp(v_i)), computed with max subtraction so it never overflows
/// while the largest element is finite and the spread stays below ~700.
/// Throws std::domain_error on empty input.
double logsumexp(std::span<const double> values);

/// softmax(v): positive entries summing to 1, invariant to a common shift of
/// the logits. Throws std::domain_error on empty input.
std::vector<double> stable_softmax(std::span<const double> logits);

}  // namespace eva
