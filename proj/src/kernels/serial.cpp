#include <cmath>

#include "ffrr/errors.hpp"
#include "ffrr/kernels.hpp"

namespace ffrr::kernels {

void embed_rows_serial(const EncoderParams& params, std::span<const FeatureVector> features,
                       std::span<double> out) {
  const std::size_t dim = params.rows();
  if (out.size() != features.size() * dim) throw DimensionError("embed_rows: output size mismatch");
  for (std::size_t i = 0; i < features.size(); ++i) {
    encode_into(params, features[i], out.subspan(i * dim, dim));
  }
}

void score_rows_serial(std::span<const double> rows, std::size_t dim,
                       std::span<const double> query, std::span<double> out) {
  if (query.size() != dim || rows.size() != out.size() * dim) {
    throw DimensionError("score_rows: shape mismatch");
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dot(rows.subspan(i * dim, dim), query);
}

void adam_step_serial(std::span<double> weights, std::span<double> m, std::span<double> v,
                      std::span<const double> grad, const AdamCoefficients& c) {
  const std::size_t n = weights.size();
  if (m.size() != n || v.size() != n || grad.size() != n) throw DimensionError("adam: shape mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    weights[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace ffrr::kernels
