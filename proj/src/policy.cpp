#include "ffrr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <spdlog/spdlog.h>

#include "ffrr/errors.hpp"
#include "json.hpp"

namespace ffrr {

using nlohmann::json;

std::string_view to_string(PolicyMode mode) {
  switch (mode) {
    case PolicyMode::Document: return "d";
    case PolicyMode::Question: return "q";
    case PolicyMode::Hybrid: return "d+q";
  }
  return "?";
}

PolicyMode parse_policy_mode(std::string_view name) {
  if (name == "d") return PolicyMode::Document;
  if (name == "q") return PolicyMode::Question;
  if (name == "d+q" || name == "dq") return PolicyMode::Hybrid;
  throw InputError("unknown policy mode '" + std::string(name) + "' (expected d, q or d+q)");
}

std::string_view to_string(Branch branch) { return branch == Branch::Explore ? "explore" : "exploit"; }

void PolicyConfig::validate() const {
  if (top_k == 0) throw InputError("K must be at least 1");
  if (pool_size == 0) throw InputError("candidate pool size must be at least 1");
  if (top_k > pool_size) throw InputError("K must not exceed the candidate pool size");
  if (max_samples == 0 || max_samples > pool_size) {
    throw InputError("max_samples must lie in [1, pool size]");
  }
  if (!(epsilon_doc >= 0.0 && epsilon_doc <= 1.0)) throw InputError("epsilon_doc must lie in [0,1]");
  if (!(epsilon_question >= 0.0 && epsilon_question <= 1.0)) {
    throw InputError("epsilon_question must lie in [0,1]");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InputError("tau must be positive");
  if (!(final_reward_weight >= 0.0) || !std::isfinite(final_reward_weight)) {
    throw InputError("final reward weight must be non-negative");
  }
}

bool Episode::in_final(std::uint32_t slot) const {
  return std::find(final_slots.begin(), final_slots.end(), slot) != final_slots.end();
}

RankedCandidates candidate_pool(const DenseIndex& index, const EncoderParams& params,
                                const FeatureVector& query, std::string query_text,
                                std::size_t n) {
  RankedCandidates pool = retrieve(index, query, params, n, std::move(query_text));
  std::vector<const FeatureVector*> docs;
  docs.reserve(pool.size());
  for (const auto& c : pool.entries) docs.push_back(&index.features(c.slot));
  const auto fresh = raw_scores(params, query, docs);
  for (std::size_t i = 0; i < pool.size(); ++i) pool.entries[i].score = fresh[i];
  sort_candidates(index, pool.entries);
  return pool;
}

SampleResult epsilon_greedy_sample(const RankedCandidates& candidates, std::span<const double> probs,
                                   std::size_t k, double eps,
                                   const std::unordered_set<std::uint32_t>& already, Rng& rng) {
  if (probs.size() != candidates.size()) throw DimensionError("probabilities do not match candidates");
  std::vector<std::size_t> remaining;
  remaining.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!already.count(candidates.entries[i].slot)) remaining.push_back(i);
  }
  if (remaining.empty()) throw InputError("every candidate has already been sampled");

  if (rng.bernoulli(eps)) return {remaining[rng.index(remaining.size())], Branch::Explore};

  const std::size_t top = std::min(std::max<std::size_t>(k, 1), remaining.size());
  double total = 0.0;
  for (std::size_t i = 0; i < top; ++i) total += probs[remaining[i]];
  if (!(total > 0.0)) return {remaining.front(), Branch::Exploit};
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < top; ++i) {
    acc += probs[remaining[i]];
    if (u < acc) return {remaining[i], Branch::Exploit};
  }
  return {remaining[top - 1], Branch::Exploit};
}

std::size_t accumulated_argmax(std::span<const double> accumulated) {
  if (accumulated.empty()) throw InputError("argmax of an empty accumulation");
  std::size_t best = 0;
  for (std::size_t i = 1; i < accumulated.size(); ++i) {
    if (accumulated[i] > accumulated[best]) best = i;
  }
  return best;
}

std::vector<std::string> episode_questions(const Claim& claim, bool* fallback) {
  if (fallback) *fallback = claim.questions.empty();
  if (claim.questions.empty()) return {claim.text};
  return claim.questions;
}

namespace {

struct QuestionPick {
  std::size_t question;
  Branch branch;
};

std::vector<QuestionPick> pick_questions(std::span<const double> rewards, std::size_t count,
                                         double eps, Rng& rng) {
  std::vector<std::size_t> remaining(rewards.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::stable_sort(remaining.begin(), remaining.end(),
                   [&](std::size_t a, std::size_t b) { return rewards[a] < rewards[b]; });
  count = std::min(count, remaining.size());
  std::vector<QuestionPick> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t pos = 0;
    Branch branch = Branch::Exploit;
    if (rng.bernoulli(eps)) {
      pos = rng.index(remaining.size());
      branch = Branch::Explore;
    }
    out.push_back({remaining[pos], branch});
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pos));
  }
  return out;
}

// Per-episode oracle access; identical document lists are answered from a
// memo so repeated inputs cost one oracle call.
class EpisodeOracle {
 public:
  EpisodeOracle(Oracle& oracle, const Claim& claim, const DenseIndex& index, Episode& episode)
      : oracle_(oracle), claim_(claim), index_(index), episode_(episode) {}

  const LabelScoreDistribution& score(const std::vector<std::uint32_t>& slots) {
    ++episode_.oracle_requests;
    auto it = memo_.find(slots);
    if (it != memo_.end()) return it->second;
    std::vector<const Document*> docs;
    docs.reserve(slots.size());
    for (auto s : slots) docs.push_back(&index_.document(s));
    auto dist = oracle_.score(claim_, docs);
    ++episode_.oracle_calls;
    if (dist.size() != oracle_.labels().size()) throw OracleError("oracle returned a wrong-sized distribution");
    return memo_.emplace(slots, std::move(dist)).first->second;
  }

  double reward(const std::vector<std::uint32_t>& slots) { return score(slots)[claim_.gold]; }
  std::size_t label_count() const { return oracle_.labels().size(); }

 private:
  Oracle& oracle_;
  const Claim& claim_;
  const DenseIndex& index_;
  Episode& episode_;
  std::map<std::vector<std::uint32_t>, LabelScoreDistribution> memo_;
};

struct QueryPool {
  FeatureVector features;
  RankedCandidates pool;
  std::vector<double> probs;
};

QueryPool make_pool(const DenseIndex& index, const EncoderParams& params, const std::string& text,
                    const PolicyConfig& cfg) {
  QueryPool q;
  q.features = featurize(text, params.cols());
  q.pool = candidate_pool(index, params, q.features, text, cfg.pool_size);
  q.probs = distribution(q.pool.scores(), cfg.temperature);
  return q;
}

PolicyAction make_action(ActionLevel level, const QueryPool& q, std::size_t chosen, Branch branch) {
  PolicyAction a;
  a.level = level;
  a.query = q.pool.query;
  a.query_features = q.features;
  a.candidates.reserve(q.pool.size());
  for (const auto& c : q.pool.entries) a.candidates.push_back(c.slot);
  a.scores = q.pool.scores();
  a.chosen = chosen;
  a.branch = branch;
  return a;
}

// Samples documents without replacement from one query's pool until the
// accumulated oracle distribution peaks at the gold label or `cap` draws.
// Returns the sampled slots in order.
std::vector<std::uint32_t> document_sequence(const Claim& claim, const QueryPool& q,
                                             const PolicyConfig& cfg, std::size_t cap,
                                             std::optional<std::size_t> question,
                                             EpisodeOracle& scorer, Episode& episode, Rng& rng) {
  const std::size_t labels = scorer.label_count();
  std::vector<double> accumulated(labels, 0.0);
  std::unordered_set<std::uint32_t> already;
  std::vector<std::uint32_t> sampled;
  cap = std::min(cap, q.pool.size());
  while (sampled.size() < cap) {
    const auto pick = epsilon_greedy_sample(q.pool, q.probs, cfg.top_k, cfg.epsilon_doc, already, rng);
    const std::uint32_t slot = q.pool.entries[pick.position].slot;
    const auto& dist = scorer.score({slot});
    PolicyAction action = make_action(ActionLevel::Document, q, pick.position, pick.branch);
    action.reward = dist[claim.gold];
    action.label_scores = dist.scores;
    action.question = question;
    episode.actions.push_back(std::move(action));
    for (std::size_t y = 0; y < labels; ++y) accumulated[y] += dist[y];
    already.insert(slot);
    sampled.push_back(slot);
    if (accumulated_argmax(accumulated) == claim.gold) break;
  }
  return sampled;
}

std::vector<std::uint32_t> unique_in_order(const std::vector<std::uint32_t>& slots) {
  std::vector<std::uint32_t> out;
  for (auto s : slots) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

struct ScoredQuestions {
  std::vector<std::string> texts;
  std::vector<QueryPool> pools;
  std::vector<double> rewards;
};

ScoredQuestions score_questions(const Claim& claim, const DenseIndex& index,
                                const EncoderParams& params, const PolicyConfig& cfg,
                                EpisodeOracle& scorer, Episode& episode) {
  ScoredQuestions out;
  out.texts = episode_questions(claim, &episode.question_fallback);
  if (episode.question_fallback) {
    spdlog::debug("claim '{}' has no questions; using the claim text", claim.id);
  }
  for (const auto& text : out.texts) {
    QueryPool q = make_pool(index, params, text, cfg);
    QuestionRecord rec;
    rec.text = text;
    rec.top_slot = q.pool.entries.front().slot;
    rec.top_probability = q.probs.front();
    rec.reward = scorer.reward({rec.top_slot});
    out.rewards.push_back(rec.reward);
    episode.questions.push_back(std::move(rec));
    out.pools.push_back(std::move(q));
  }
  return out;
}

PolicyAction question_action(const Claim& claim, const QueryPool& q, std::size_t question,
                             Branch branch, EpisodeOracle& scorer) {
  PolicyAction action = make_action(ActionLevel::Question, q, 0, branch);
  const auto& dist = scorer.score({q.pool.entries.front().slot});
  action.reward = dist[claim.gold];
  action.label_scores = dist.scores;
  action.question = question;
  return action;
}

}  // namespace

std::vector<std::size_t> select_questions(std::span<const double> rewards, std::size_t count,
                                          double eps, Rng& rng) {
  std::vector<std::size_t> out;
  for (const auto& p : pick_questions(rewards, count, eps, rng)) out.push_back(p.question);
  return out;
}

Episode run_document_episode(const Claim& claim, const DenseIndex& index,
                             const EncoderParams& params, Oracle& oracle,
                             const PolicyConfig& cfg, Rng& rng) {
  Episode episode;
  episode.claim_id = claim.id;
  episode.mode = PolicyMode::Document;
  EpisodeOracle scorer(oracle, claim, index, episode);

  const QueryPool q = make_pool(index, params, claim.text, cfg);
  const auto sampled =
      document_sequence(claim, q, cfg, cfg.max_samples, std::nullopt, scorer, episode, rng);
  episode.kappa = sampled.size();
  episode.k = std::min(cfg.top_k, episode.kappa);
  episode.final_slots.assign(sampled.begin(), sampled.begin() + static_cast<std::ptrdiff_t>(episode.k));
  episode.final_reward = scorer.reward(episode.final_slots);
  return episode;
}

Episode run_question_episode(const Claim& claim, const DenseIndex& index,
                             const EncoderParams& params, Oracle& oracle,
                             const PolicyConfig& cfg, Rng& rng) {
  Episode episode;
  episode.claim_id = claim.id;
  episode.mode = PolicyMode::Question;
  EpisodeOracle scorer(oracle, claim, index, episode);

  const auto scored = score_questions(claim, index, params, cfg, scorer, episode);
  const auto picks = pick_questions(scored.rewards, cfg.top_k, cfg.epsilon_question, rng);
  std::vector<std::uint32_t> tops;
  for (std::size_t order = 0; order < picks.size(); ++order) {
    const std::size_t qi = picks[order].question;
    episode.questions[qi].selection_order = order;
    episode.selected_questions.push_back(qi);
    episode.actions.push_back(question_action(claim, scored.pools[qi], qi, picks[order].branch, scorer));
    tops.push_back(episode.questions[qi].top_slot);
  }
  episode.kappa = scored.texts.size();
  episode.k = picks.size();
  episode.final_slots = unique_in_order(tops);
  episode.final_reward = scorer.reward(episode.final_slots);
  return episode;
}

Episode run_hybrid_episode(const Claim& claim, const DenseIndex& index,
                           const EncoderParams& params, Oracle& oracle,
                           const PolicyConfig& cfg, Rng& rng) {
  Episode episode;
  episode.claim_id = claim.id;
  episode.mode = PolicyMode::Hybrid;
  EpisodeOracle scorer(oracle, claim, index, episode);

  const auto scored = score_questions(claim, index, params, cfg, scorer, episode);
  const auto picks = pick_questions(scored.rewards, cfg.top_k, cfg.epsilon_question, rng);
  std::vector<std::uint32_t> tops;
  for (std::size_t order = 0; order < picks.size(); ++order) {
    const std::size_t qi = picks[order].question;
    episode.questions[qi].selection_order = order;
    episode.selected_questions.push_back(qi);
    episode.actions.push_back(question_action(claim, scored.pools[qi], qi, picks[order].branch, scorer));
    const auto inner =
        document_sequence(claim, scored.pools[qi], cfg, cfg.top_k, qi, scorer, episode, rng);
    episode.questions[qi].inner_samples = inner.size();
    tops.push_back(episode.questions[qi].top_slot);
  }
  episode.kappa = picks.size();
  episode.k = std::min(cfg.top_k, episode.kappa);
  episode.final_slots = unique_in_order(tops);
  episode.final_reward = scorer.reward(episode.final_slots);
  return episode;
}

Episode run_episode(const Claim& claim, const DenseIndex& index, const EncoderParams& params,
                    Oracle& oracle, const PolicyConfig& cfg, Rng& rng) {
  switch (cfg.mode) {
    case PolicyMode::Document: return run_document_episode(claim, index, params, oracle, cfg, rng);
    case PolicyMode::Question: return run_question_episode(claim, index, params, oracle, cfg, rng);
    case PolicyMode::Hybrid: return run_hybrid_episode(claim, index, params, oracle, cfg, rng);
  }
  throw InputError("unknown policy mode");
}

std::vector<std::uint32_t> select_inference_docs(const Claim& claim, const DenseIndex& index,
                                                 const EncoderParams& params,
                                                 const PolicyConfig& cfg) {
  if (cfg.mode == PolicyMode::Document) {
    const auto pool =
        candidate_pool(index, params, featurize(claim.text, params.cols()), claim.text, cfg.pool_size);
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < std::min(cfg.top_k, pool.size()); ++i) out.push_back(pool.entries[i].slot);
    return out;
  }

  struct Top {
    std::size_t question;
    std::uint32_t slot;
    double probability;
  };
  std::vector<Top> tops;
  const auto questions = episode_questions(claim);
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const QueryPool q = make_pool(index, params, questions[i], cfg);
    tops.push_back({i, q.pool.entries.front().slot, q.probs.front()});
  }
  std::stable_sort(tops.begin(), tops.end(),
                   [](const Top& a, const Top& b) { return a.probability > b.probability; });
  std::vector<std::uint32_t> out;
  for (const auto& t : tops) {
    if (out.size() == cfg.top_k) break;
    if (std::find(out.begin(), out.end(), t.slot) == out.end()) out.push_back(t.slot);
  }
  return out;
}

void write_episode_trace(std::ostream& out, const Episode& episode, const DenseIndex& index) {
  for (std::size_t step = 0; step < episode.actions.size(); ++step) {
    const auto& a = episode.actions[step];
    json candidates = json::array();
    for (auto s : a.candidates) candidates.push_back(index.id(s));
    json rec = {
        {"claim_id", episode.claim_id},
        {"mode", to_string(episode.mode)},
        {"step", step},
        {"level", a.level == ActionLevel::Document ? "document" : "question"},
        {"query", a.query},
        {"question", a.question ? json(*a.question) : json(nullptr)},
        {"doc_id", index.id(a.slot())},
        {"branch", to_string(a.branch)},
        {"reward", a.reward},
        {"label_scores", a.label_scores},
        {"candidates", std::move(candidates)},
        {"scores", a.scores},
        {"in_final", episode.in_final(a.slot())},
        {"final_reward", episode.final_reward},
        {"kappa", episode.kappa},
        {"k", episode.k},
    };
    out << rec.dump() << '\n';
  }
}

}  // namespace ffrr
