#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ffrr/oracle.hpp"
#include "ffrr/prompts.hpp"

namespace ffrr {

struct RemoteOracleSpec {
  std::string endpoint = "https://api.openai.com/v1/completions";
  std::string token_env = "OPENAI_API_KEY";
  std::string model = "text-davinci-003";
  /// Scoring token per label, same order as the label set. Empty means
  /// derive from label names (leading alphanumeric run, lowercased).
  std::vector<std::string> label_tokens;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_in_flight = 4;
  std::size_t max_retries = 3;
  std::chrono::milliseconds backoff_initial{500};
  double backoff_multiplier = 2.0;
  bool cache = true;
  std::optional<std::filesystem::path> cache_dir;
  std::size_t top_logprobs = 5;
  std::size_t shots = 2;
  std::size_t max_prompt_chars = 16000;
  std::size_t decompose_max_tokens = 256;
  /// Score assigned to a label token missing from the returned top list.
  double missing_label_floor = 1e-6;
};

/// Label tokens after normalization (trimmed, lowercased). Throws
/// InputError if two labels map to the same token.
std::vector<std::string> resolve_label_tokens(const LabelSet& labels,
                                              const std::vector<std::string>& declared);

/// Client for an HTTP completions endpoint exposing next-token log-scores.
///
/// Request: POST {"model", "prompt", "temperature": 0, "max_tokens",
/// "logprobs"} with a bearer token read from `token_env`. Response:
/// {"choices": [{"text", "logprobs": {"top_logprobs": [{token: logprob}]}}]}.
/// Label scores are a softmax over the label tokens' log-scores only.
class RemoteOracle : public Oracle {
 public:
  RemoteOracle(LabelSet labels, RemoteOracleSpec spec, PromptTemplates templates);

  const LabelSet& labels() const override { return labels_; }
  LabelScoreDistribution score(const Claim& claim, DocumentRefs docs) override;
  std::vector<std::string> decompose(const Claim& claim) override;

  /// The exact prompt score() would send; throws OracleError naming the
  /// first document that pushes it over max_prompt_chars.
  std::string prediction_prompt(const Claim& claim, DocumentRefs docs) const;

  /// Label distribution from one completions response body.
  LabelScoreDistribution parse_label_scores(const std::string& body) const;

  std::size_t network_requests() const noexcept { return network_requests_.load(); }
  std::size_t cache_hits() const noexcept { return cache_hits_.load(); }

 private:
  std::string complete(const std::string& prompt, std::size_t max_tokens);
  std::string post_with_retries(const std::string& payload);
  std::optional<std::string> read_disk_cache(const std::string& key, const std::string& prompt) const;
  void write_disk_cache(const std::string& key, const std::string& prompt,
                        const std::string& response) const;

  LabelSet labels_;
  RemoteOracleSpec spec_;
  PromptTemplates templates_;
  std::vector<std::string> label_tokens_;
  std::string scheme_host_;
  std::string path_;

  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  std::size_t in_flight_ = 0;

  std::mutex cache_mutex_;
  std::unordered_map<std::string, std::shared_future<std::string>> cache_;
  mutable std::mutex disk_mutex_;

  std::atomic<std::size_t> network_requests_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace ffrr
