#include "ffrr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "ffrr/encoder.hpp"
#include "ffrr/rng.hpp"

namespace ffrr {

namespace {

FeatureVector random_features(Rng& rng, std::uint32_t dim) {
  const std::size_t nnz = 1 + rng.index(std::min<std::size_t>(4, dim));
  std::vector<std::uint32_t> idx;
  while (idx.size() < nnz) {
    const auto i = static_cast<std::uint32_t>(rng.index(dim));
    if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end());
  FeatureVector x;
  x.dim = dim;
  for (auto i : idx) x.entries.push_back({i, rng.normal()});
  return x;
}

std::vector<double> numeric_gradient(EncoderParams params, const std::function<double(const EncoderParams&)>& f,
                                     double h) {
  std::vector<double> out(params.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = params.data()[i];
    params.data()[i] = w + h;
    const double up = f(params);
    params.data()[i] = w - h;
    const double down = f(params);
    params.data()[i] = w;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

double normwise_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return scale > 0.0 ? diff / scale : 0.0;
}

void corrupt(std::vector<double>& grad) {
  for (auto& g : grad) g = g * 1.01 + 1e-3;
}

}  // namespace

GradcheckResult run_gradcheck(const GradcheckOptions& options) {
  GradcheckResult result;
  for (std::size_t n = 0; n < options.instances; ++n) {
    const std::uint64_t seed = derive_seed(options.seed, "gradcheck", n);
    Rng rng(seed);
    const auto rows = static_cast<std::uint32_t>(2 + rng.index(7));
    const auto cols = static_cast<std::uint32_t>(4 + rng.index(29));
    const std::size_t count = 2 + rng.index(4);
    const double tau = 0.5 + 1.5 * rng.uniform();
    const auto params = EncoderParams::random(rows, cols, seed);

    const FeatureVector query = random_features(rng, cols);
    std::vector<FeatureVector> docs;
    std::vector<FeatureVector> queries;
    for (std::size_t j = 0; j < count; ++j) {
      docs.push_back(random_features(rng, cols));
      queries.push_back(random_features(rng, cols));
    }
    std::vector<const FeatureVector*> doc_ptrs;
    for (const auto& d : docs) doc_ptrs.push_back(&d);
    const std::size_t selected = rng.index(count);

    auto analytic = log_policy_grad(params, query, doc_ptrs, selected, tau).dense();
    if (options.corrupt) corrupt(analytic);
    const auto numeric = numeric_gradient(
        params, [&](const EncoderParams& p) { return log_policy(p, query, doc_ptrs, selected, tau); },
        options.step);
    const double lp_err = normwise_error(analytic, numeric);
    if (lp_err > result.max_log_policy_error) {
      result.max_log_policy_error = lp_err;
      result.worst_log_policy_seed = seed;
    }

    // Alternate shared-query and per-pair-query supports and both directions.
    const bool shared = n % 2 == 0;
    const auto direction = (n / 2) % 2 == 0 ? KlDirection::RetrievalToRated : KlDirection::RatedToRetrieval;
    std::vector<ScoredPair> support;
    for (std::size_t j = 0; j < count; ++j) support.push_back({shared ? &query : &queries[j], &docs[j]});
    std::vector<double> target(count);
    double total = 0.0;
    for (auto& t : target) total += (t = 0.05 + rng.uniform());
    for (auto& t : target) t /= total;

    auto kl_analytic = kl_divergence_grad(params, support, target, tau, direction).gradient.dense();
    if (options.corrupt) corrupt(kl_analytic);
    const auto kl_numeric = numeric_gradient(
        params,
        [&](const EncoderParams& p) { return kl_divergence_grad(p, support, target, tau, direction).value; },
        options.step);
    const double kl_err = normwise_error(kl_analytic, kl_numeric);
    if (kl_err > result.max_kl_error) {
      result.max_kl_error = kl_err;
      result.worst_kl_seed = seed;
    }
    ++result.instances;
  }
  result.passed = result.instances > 0 && result.max_log_policy_error < options.tolerance &&
                  result.max_kl_error < options.tolerance;
  return result;
}

}  // namespace ffrr
