#include "eva/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "eva/numerics.hpp"

namespace eva {

namespace {

void validate(const AttentionInstance& inst) {
  if (inst.Q.cols != inst.K.cols || inst.K.cols != inst.V.cols) {
    throw std::invalid_argument("AttentionInstance: Q, K, V must share the feature dimension");
  }
  if (inst.K.rows != inst.V.rows) {
    throw std::invalid_argument("AttentionInstance: K and V must have the same number of rows");
  }
  if (inst.Q.rows == 0 || inst.K.rows == 0 || inst.Q.cols == 0) {
    throw std::invalid_argument("AttentionInstance: empty matrices");
  }
  if (!(inst.logit_scale > 0.0) || !std::isfinite(inst.logit_scale)) {
    throw std::invalid_argument("AttentionInstance: logit_scale must be finite and positive");
  }
  if (!inst.Q.all_finite() || !inst.K.all_finite() || !inst.V.all_finite()) {
    throw std::invalid_argument("AttentionInstance: non-finite entries");
  }
}

Mat scale_rows(const Mat& m, double factor) {
  Mat out = m;
  for (double& v : out.data) v *= factor;
  return out;
}

}  // namespace

AttentionInstance::AttentionInstance(Mat q, Mat k, Mat v)
    : Q(std::move(q)), K(std::move(k)), V(std::move(v)),
      logit_scale(1.0 / std::sqrt(static_cast<double>(Q.cols == 0 ? 1 : Q.cols))) {
  validate(*this);
}

AttentionInstance::AttentionInstance(Mat q, Mat k, Mat v, double scale)
    : Q(std::move(q)), K(std::move(k)), V(std::move(v)), logit_scale(scale) {
  validate(*this);
}

Mat scaled_queries(const AttentionInstance& inst) {
  return scale_rows(inst.Q, std::sqrt(inst.logit_scale));
}

Mat scaled_keys(const AttentionInstance& inst) {
  return scale_rows(inst.K, std::sqrt(inst.logit_scale));
}

std::vector<double> attention_weight_row(const AttentionInstance& inst, std::size_t query_index) {
  if (query_index >= inst.num_queries()) {
    throw std::invalid_argument("attention_weight_row: query index out of range");
  }
  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const std::size_t m_count = inst.num_keys();
  std::vector<double> logits(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    logits[m] = dot(qs.row(query_index), ks.row(m));
  }
  return stable_softmax(logits);
}

Mat attention_weights(const AttentionInstance& inst) {
  const Mat qs = scaled_queries(inst);
  const Mat ks = scaled_keys(inst);
  const std::size_t n_count = inst.num_queries();
  const std::size_t m_count = inst.num_keys();
  Mat weights(n_count, m_count);
  std::vector<double> logits(m_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    for (std::size_t m = 0; m < m_count; ++m) {
      logits[m] = dot(qs.row(n), ks.row(m));
    }
    const std::vector<double> row = stable_softmax(logits);
    for (std::size_t m = 0; m < m_count; ++m) weights(n, m) = row[m];
  }
  return weights;
}

Mat softmax_attention(const AttentionInstance& inst) {
  const Mat weights = attention_weights(inst);
  const std::size_t n_count = inst.num_queries();
  const std::size_t m_count = inst.num_keys();
  const std::size_t d = inst.dim();
  Mat out(n_count, d);
  for (std::size_t n = 0; n < n_count; ++n) {
    for (std::size_t m = 0; m < m_count; ++m) {
      const double w = weights(n, m);
      for (std::size_t j = 0; j < d; ++j) out(n, j) += w * inst.V(m, j);
    }
  }
  return out;
}

}  // namespace eva
