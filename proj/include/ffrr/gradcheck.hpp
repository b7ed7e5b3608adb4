#pragma once

#include <cstddef>
#include <cstdint>

namespace ffrr {

struct GradcheckOptions {
  std::uint64_t seed = 1;
  std::size_t instances = 100;
  double step = 1e-6;
  double tolerance = 1e-5;
  /// Test hook: perturbs the analytic gradients to exercise the failure path.
  bool corrupt = false;
};

struct GradcheckResult {
  double max_log_policy_error = 0.0;
  double max_kl_error = 0.0;
  std::uint64_t worst_log_policy_seed = 0;
  std::uint64_t worst_kl_seed = 0;
  std::size_t instances = 0;
  bool passed = false;
};

/// Normwise relative error max|a - n| / max(max|a|, max|n|) between
/// analytic and central-difference gradients, maximized over randomized
/// instances (E <= 8, F <= 32, <= 5 candidates).
GradcheckResult run_gradcheck(const GradcheckOptions& options);

}  // namespace ffrr
