#include <cmath>
#include <cstdint>

#include <omp.h>

#include "ffrr/errors.hpp"
#include "ffrr/kernels.hpp"

namespace ffrr::kernels {

int max_threads() { return omp_get_max_threads(); }

void embed_rows_parallel(const EncoderParams& params, std::span<const FeatureVector> features,
                         std::span<double> out) {
  const std::size_t dim = params.rows();
  if (out.size() != features.size() * dim) throw DimensionError("embed_rows: output size mismatch");
  for (const auto& f : features) {
    if (f.dim != params.cols() || (!f.entries.empty() && f.entries.back().index >= params.cols())) {
      throw DimensionError("embed_rows: feature dimension mismatch");
    }
  }
  const auto n = static_cast<std::int64_t>(features.size());
  const auto cols = std::size_t{params.cols()};
  const double* w = params.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& x = features[static_cast<std::size_t>(i)];
    double* dst = out.data() + static_cast<std::size_t>(i) * dim;
    for (std::size_t r = 0; r < dim; ++r) {
      const double* row = w + r * cols;
      double acc = 0.0;
      for (const auto& e : x.entries) acc += row[e.index] * e.weight;
      dst[r] = acc;
    }
  }
}

void score_rows_parallel(std::span<const double> rows, std::size_t dim,
                         std::span<const double> query, std::span<double> out) {
  if (query.size() != dim || rows.size() != out.size() * dim) {
    throw DimensionError("score_rows: shape mismatch");
  }
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = rows.data() + static_cast<std::size_t>(i) * dim;
    double acc = 0.0;
    for (std::size_t k = 0; k < dim; ++k) acc += row[k] * query[k];
    out[static_cast<std::size_t>(i)] = acc;
  }
}

void adam_step_parallel(std::span<double> weights, std::span<double> m, std::span<double> v,
                        std::span<const double> grad, const AdamCoefficients& c) {
  const std::size_t n = weights.size();
  if (m.size() != n || v.size() != n || grad.size() != n) throw DimensionError("adam: shape mismatch");
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < count; ++j) {
    const auto i = static_cast<std::size_t>(j);
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    weights[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace ffrr::kernels
