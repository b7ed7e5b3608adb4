#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ffrr/datamodel.hpp"
#include "ffrr/encoder.hpp"
#include "ffrr/index.hpp"
#include "ffrr/oracle.hpp"
#include "ffrr/rng.hpp"

namespace ffrr {

enum class PolicyMode {
  Document,  // d
  Question,  // q
  Hybrid,    // d+q
};

std::string_view to_string(PolicyMode mode);
PolicyMode parse_policy_mode(std::string_view name);

struct PolicyConfig {
  std::size_t top_k = 3;
  double epsilon_doc = 0.1;
  double epsilon_question = 0.1;
  std::size_t pool_size = 20;
  double temperature = 1.0;
  std::size_t max_samples = 6;  // 2K
  double final_reward_weight = 1.0;
  PolicyMode mode = PolicyMode::Document;

  /// Throws InputError on K > n, max_samples > n, eps outside [0,1], tau <= 0.
  void validate() const;
};

enum class Branch { Explore, Exploit };
std::string_view to_string(Branch branch);

enum class ActionLevel { Document, Question };

/// One (query, sampled document) pair with everything needed to recompute
/// its policy gradient later: the candidate pool with the fresh scores it
/// was sampled under, and the intermediate reward.
struct PolicyAction {
  ActionLevel level = ActionLevel::Document;
  std::string query;
  FeatureVector query_features;
  std::vector<std::uint32_t> candidates;  // slots, in fresh-score order
  std::vector<double> scores;             // raw scores, same order
  std::size_t chosen = 0;                 // position in candidates
  Branch branch = Branch::Exploit;
  double reward = 0.0;                    // intermediate reward r_d or r_q
  std::vector<double> label_scores;       // full oracle distribution
  std::optional<std::size_t> question;    // owning question, q and d+q modes

  std::uint32_t slot() const { return candidates.at(chosen); }
};

struct QuestionRecord {
  std::string text;
  std::uint32_t top_slot = 0;
  double top_probability = 0.0;  // pi(top doc | question)
  double reward = 0.0;           // r_q
  std::optional<std::size_t> selection_order;
  std::size_t inner_samples = 0;  // d+q only
};

struct Episode {
  std::string claim_id;
  PolicyMode mode = PolicyMode::Document;
  std::vector<PolicyAction> actions;
  std::vector<QuestionRecord> questions;
  std::vector<std::size_t> selected_questions;  // in selection order
  /// d: documents sampled before termination. q, d+q: questions processed.
  std::size_t kappa = 0;
  std::size_t k = 0;                     // min(K, kappa)
  std::vector<std::uint32_t> final_slots;  // documents behind r_g
  double final_reward = 0.0;             // r_g
  std::size_t oracle_requests = 0;       // score() requests, memo hits included
  std::size_t oracle_calls = 0;          // score() calls that reached the oracle
  bool question_fallback = false;        // claim text used as the only question

  bool in_final(std::uint32_t slot) const;
};

/// Fresh candidate pool: top-n rows from the (possibly stale) index, then
/// rescored under the current params and re-sorted.
RankedCandidates candidate_pool(const DenseIndex& index, const EncoderParams& params,
                                const FeatureVector& query, std::string query_text,
                                std::size_t n);

struct SampleResult {
  std::size_t position;  // into candidates.entries
  Branch branch;
};

/// With probability eps a uniform draw from the remaining candidates;
/// otherwise a draw from `probs` renormalized over the K highest-ranked
/// remaining candidates. `already` holds slots sampled earlier for the same
/// query. Throws InputError when every candidate is exhausted.
SampleResult epsilon_greedy_sample(const RankedCandidates& candidates, std::span<const double> probs,
                                   std::size_t k, double eps,
                                   const std::unordered_set<std::uint32_t>& already, Rng& rng);

/// Index of the accumulated-score argmax (lowest label wins ties).
std::size_t accumulated_argmax(std::span<const double> accumulated);

/// Questions to use for a claim: its own list, or the claim text as a
/// single pseudo-question when empty.
std::vector<std::string> episode_questions(const Claim& claim, bool* fallback = nullptr);

/// Greedy-with-exploration order over questions: ascending reward, each
/// pick uniform over the remaining ones with probability eps, otherwise
/// the lowest-reward remaining question. Returns `count` indices.
std::vector<std::size_t> select_questions(std::span<const double> rewards, std::size_t count,
                                          double eps, Rng& rng);

Episode run_document_episode(const Claim& claim, const DenseIndex& index,
                             const EncoderParams& params, Oracle& oracle,
                             const PolicyConfig& cfg, Rng& rng);
Episode run_question_episode(const Claim& claim, const DenseIndex& index,
                             const EncoderParams& params, Oracle& oracle,
                             const PolicyConfig& cfg, Rng& rng);
Episode run_hybrid_episode(const Claim& claim, const DenseIndex& index,
                           const EncoderParams& params, Oracle& oracle,
                           const PolicyConfig& cfg, Rng& rng);
/// Dispatches on cfg.mode.
Episode run_episode(const Claim& claim, const DenseIndex& index, const EncoderParams& params,
                    Oracle& oracle, const PolicyConfig& cfg, Rng& rng);

/// Oracle-free, deterministic evidence selection. d: top-K for the claim.
/// q and d+q: each question's top document, questions ranked by that
/// document's retrieval probability, first K kept (duplicates dropped).
std::vector<std::uint32_t> select_inference_docs(const Claim& claim, const DenseIndex& index,
                                                 const EncoderParams& params,
                                                 const PolicyConfig& cfg);

/// One JSON object per action, for audit dumps.
void write_episode_trace(std::ostream& out, const Episode& episode, const DenseIndex& index);

}  // namespace ffrr
