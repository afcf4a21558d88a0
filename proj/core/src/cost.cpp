#include "eva/report.hpp"

namespace eva::cost {

namespace {
constexpr std::uint64_t kBytes = 8;  // sizeof(double)

// A length-d dot product: d multiplies + d adds.
std::uint64_t dot_flops(std::uint64_t d) { return 2 * d; }
}  // namespace

std::uint64_t softmax_attention_flops(std::size_t n, std::size_t m, std::size_t d) {
  // Logits, row softmax (exp + normalize), and the weight-times-V product.
  const std::uint64_t nm = static_cast<std::uint64_t>(n) * m;
  return nm * dot_flops(d)       // logits
         + nm * 3                // exp, accumulate, divide
         + nm * 2 * d            // P * V
         + static_cast<std::uint64_t>(n) * m;  // row max scans
}

std::uint64_t softmax_attention_peak_bytes(std::size_t n, std::size_t m, std::size_t d) {
  const std::uint64_t inputs = (static_cast<std::uint64_t>(n) + 2 * m) * d;
  const std::uint64_t weights = static_cast<std::uint64_t>(n) * m;
  const std::uint64_t output = static_cast<std::uint64_t>(n) * d;
  return kBytes * (inputs + weights + output);
}

std::uint64_t performer_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t s) {
  const std::uint64_t feat = (static_cast<std::uint64_t>(n) + m) * s * (dot_flops(d) + 3);
  const std::uint64_t kv = static_cast<std::uint64_t>(m) * s * (2 * d + 2);  // A and b accumulation
  const std::uint64_t query = static_cast<std::uint64_t>(n) * s * (2 * d + 2) +
                              static_cast<std::uint64_t>(n) * (d + 1);
  return feat + kv + query;
}

std::uint64_t performer_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t s) {
  const std::uint64_t inputs = (static_cast<std::uint64_t>(n) + 2 * m) * d;
  const std::uint64_t features = (static_cast<std::uint64_t>(n) + m) * s;
  const std::uint64_t kv_summary = static_cast<std::uint64_t>(s) * d + s;
  const std::uint64_t output = static_cast<std::uint64_t>(n) * d + n;
  return kBytes * (inputs + features + kv_summary + output);
}

std::uint64_t practical_eva_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t sum_e_sizes,
                                  std::size_t c) {
  const std::uint64_t scale = (static_cast<std::uint64_t>(n) + m) * d;
  const std::uint64_t pooling = (static_cast<std::uint64_t>(n) + m) * d + 2ull * c * d;
  const std::uint64_t betas = static_cast<std::uint64_t>(m) * (dot_flops(d) + d + 3) + 2ull * c * d;
  const std::uint64_t per_query =
      static_cast<std::uint64_t>(sum_e_sizes) * (dot_flops(d) + d + 2) +
      static_cast<std::uint64_t>(n) * c * (dot_flops(d) + d + 2) +
      static_cast<std::uint64_t>(n) * (d + 2);
  return scale + pooling + betas + per_query;
}

std::uint64_t practical_eva_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t k,
                                       std::size_t c) {
  const std::uint64_t inputs = (static_cast<std::uint64_t>(n) + 2 * m) * d;
  const std::uint64_t group_state = 4ull * c * d + c;  // k~, q~, omegas, betas, weight scratch
  const std::uint64_t scratch = static_cast<std::uint64_t>(k) + c;  // per-query logits
  const std::uint64_t output = static_cast<std::uint64_t>(n) * d + n;
  return kBytes * (inputs + group_state + scratch + output);
}

std::uint64_t causal_eva_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t sum_e_sizes,
                               std::size_t c) {
  return practical_eva_flops(n, m, d, sum_e_sizes, c);
}

std::uint64_t causal_eva_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t k,
                                    std::size_t c) {
  return practical_eva_peak_bytes(n, m, d, k, c) +
         kBytes * (static_cast<std::uint64_t>(k) * k + static_cast<std::uint64_t>(c) * c);
}

std::uint64_t ideal_eva_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t s, std::size_t c) {
  const std::uint64_t sample_table = static_cast<std::uint64_t>(s) * m * dot_flops(d) +
                                     static_cast<std::uint64_t>(m) * dot_flops(d);
  const std::uint64_t per_query = static_cast<std::uint64_t>(n) *
                                  (m * dot_flops(d)              // exact logits
                                   + static_cast<std::uint64_t>(s) * m * 3  // xi terms
                                   + m * (d + 2) + c * (d + 2) + d + 2);
  return sample_table + per_query;
}

std::uint64_t ideal_eva_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t s,
                                   std::size_t c) {
  const std::uint64_t inputs = (static_cast<std::uint64_t>(n) + 2 * m) * d;
  const std::uint64_t samples = static_cast<std::uint64_t>(s) * d + 2 * s +
                                static_cast<std::uint64_t>(s) * m;
  const std::uint64_t scratch = static_cast<std::uint64_t>(m) + c * (d + 1);
  const std::uint64_t output = static_cast<std::uint64_t>(n) * d + n;
  return kBytes * (inputs + samples + scratch + output);
}

std::uint64_t scatterbrain_flops(std::size_t n, std::size_t m, std::size_t d, std::size_t s) {
  const std::uint64_t feat = (static_cast<std::uint64_t>(n) + m) * s * (dot_flops(d) + 3);
  const std::uint64_t per_query = static_cast<std::uint64_t>(n) * m * (2 * s + dot_flops(d) + d + 2);
  return feat + per_query;
}

std::uint64_t scatterbrain_peak_bytes(std::size_t n, std::size_t m, std::size_t d, std::size_t s) {
  const std::uint64_t inputs = (static_cast<std::uint64_t>(n) + 2 * m) * d;
  const std::uint64_t features = (static_cast<std::uint64_t>(n) + m) * s;
  const std::uint64_t scratch = static_cast<std::uint64_t>(s) * d + m;
  const std::uint64_t output = static_cast<std::uint64_t>(n) * d + n;
  return kBytes * (inputs + features + scratch + output);
}

}  // namespace eva::cost
