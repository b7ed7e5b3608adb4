#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "ffrr/encoder.hpp"

// Data-parallel inner loops. Each kernel has a serial reference and an
// OpenMP version; both compute every output element with the same
// arithmetic, so results are bit-identical regardless of thread count.
namespace ffrr::kernels {

/// out[i*E .. (i+1)*E) = W * features[i]
void embed_rows_serial(const EncoderParams& params, std::span<const FeatureVector> features,
                       std::span<double> out);
void embed_rows_parallel(const EncoderParams& params, std::span<const FeatureVector> features,
                         std::span<double> out);

/// out[i] = rows[i*dim .. (i+1)*dim) . query
void score_rows_serial(std::span<const double> rows, std::size_t dim,
                       std::span<const double> query, std::span<double> out);
void score_rows_parallel(std::span<const double> rows, std::size_t dim,
                         std::span<const double> query, std::span<double> out);

struct AdamCoefficients {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

/// Elementwise Adam minimization step on a dense loss gradient.
void adam_step_serial(std::span<double> weights, std::span<double> m, std::span<double> v,
                      std::span<const double> grad, const AdamCoefficients& c);
void adam_step_parallel(std::span<double> weights, std::span<double> m, std::span<double> v,
                        std::span<const double> grad, const AdamCoefficients& c);

/// Number of OpenMP threads the parallel kernels will use.
int max_threads();

}  // namespace ffrr::kernels
