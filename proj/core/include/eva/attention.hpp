#pragma once

#include <cstddef>
#include <vector>

#include "eva/mat.hpp"

namespace eva {

/// One attention problem: N queries against M key-value pairs, all
/// d-dimensional. `logit_scale` multiplies every dot product; the default is
/// 1/sqrt(d). Estimators consume the pre-scaled rows q' = sqrt(scale) * q and
/// k' = sqrt(scale) * k, so q'.k' == scale * (q.k) and every code path sees
/// the same logits.
struct AttentionInstance {
  Mat Q;  // N x d
  Mat K;  // M x d
  Mat V;  // M x d
  double logit_scale;

  AttentionInstance(Mat q, Mat k, Mat v);
  AttentionInstance(Mat q, Mat k, Mat v, double scale);

  std::size_t num_queries() const { return Q.rows; }
  std::size_t num_keys() const { return K.rows; }
  std::size_t dim() const { return Q.cols; }
};

/// sqrt(logit_scale) * Q and sqrt(logit_scale) * K.
Mat scaled_queries(const AttentionInstance& inst);
Mat scaled_keys(const AttentionInstance& inst);

/// Softmax attention probabilities for one query row (sums to 1).
std::vector<double> attention_weight_row(const AttentionInstance& inst, std::size_t query_index);

/// N x M matrix of softmax attention probabilities, one row per query.
Mat attention_weights(const AttentionInstance& inst);

/// Exact softmax attention output (N x d). Materializes the full weight
/// matrix and multiplies by V; the quadratic reference all estimators are
/// measured against.
Mat softmax_attention(const AttentionInstance& inst);

}  // namespace eva
