#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <map>
#include <sstream>

#include "ffrr/errors.hpp"
#include "ffrr/policy.hpp"
#include "test_support.hpp"

using namespace ffrr;
using ffrr::testing::ScriptedOracle;

namespace {

constexpr std::uint32_t kF = 1u << 12;

RankedCandidates ranked(std::size_t n) {
  RankedCandidates c;
  for (std::size_t i = 0; i < n; ++i) c.entries.push_back({static_cast<std::uint32_t>(i), double(n - i)});
  return c;
}

struct World {
  std::shared_ptr<const Corpus> corpus;
  EncoderParams params;
  DenseIndex index;

  explicit World(std::size_t docs = 30, double scale = 1.0) {
    std::vector<std::pair<std::string, std::string>> d;
    for (std::size_t i = 0; i < docs; ++i) {
      d.emplace_back("doc" + std::to_string(100 + i), "w" + std::to_string(i) + " v" + std::to_string(i) + " shared");
    }
    corpus = ffrr::testing::make_corpus(d);
    params = EncoderParams::random(64, kF, 17);
    for (auto& w : params.data()) w *= scale;
    index = DenseIndex::build(corpus, params);
  }
};

PolicyConfig config(PolicyMode mode, double eps = 0.1) {
  PolicyConfig c;
  c.mode = mode;
  c.epsilon_doc = eps;
  c.epsilon_question = eps;
  return c;
}

std::size_t reaccumulated_kappa(const Episode& e, std::size_t gold, std::size_t cap) {
  std::vector<double> acc;
  for (std::size_t i = 0; i < e.actions.size(); ++i) {
    const auto& s = e.actions[i].label_scores;
    if (acc.empty()) acc.assign(s.size(), 0.0);
    for (std::size_t y = 0; y < s.size(); ++y) acc[y] += s[y];
    std::size_t best = 0;
    for (std::size_t y = 1; y < acc.size(); ++y) if (acc[y] > acc[best]) best = y;
    if (best == gold) return i + 1;
  }
  return cap;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("mode and branch names") {
  CHECK(parse_policy_mode("d") == PolicyMode::Document);
  CHECK(parse_policy_mode("q") == PolicyMode::Question);
  CHECK(parse_policy_mode("d+q") == PolicyMode::Hybrid);
  CHECK(to_string(PolicyMode::Hybrid) == "d+q");
  CHECK_THROWS_AS(parse_policy_mode("x"), InputError);
  CHECK(to_string(Branch::Explore) == "explore");
}

TEST_CASE("config validation") {
  PolicyConfig c;
  CHECK_NOTHROW(c.validate());
  c.top_k = 21;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.max_samples = 21;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.epsilon_doc = 1.5;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.temperature = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("epsilon 0 always exploits within the top-K of the remaining candidates") {
  const auto c = ranked(20);
  const auto probs = distribution(c.scores(), 1.0);
  Rng rng(1);
  std::unordered_set<std::uint32_t> already = {0, 2};
  for (int t = 0; t < 2000; ++t) {
    const auto s = epsilon_greedy_sample(c, probs, 3, 0.0, already, rng);
    CHECK(s.branch == Branch::Exploit);
    CHECK((s.position == 1 || s.position == 3 || s.position == 4));
  }
}

TEST_CASE("epsilon 1 is uniform over the remaining candidates") {
  const auto c = ranked(20);
  const auto probs = distribution(c.scores(), 1.0);
  Rng rng(2);
  const int draws = 100000;
  std::vector<int> counts(20, 0);
  for (int t = 0; t < draws; ++t) {
    const auto s = epsilon_greedy_sample(c, probs, 3, 1.0, {}, rng);
    CHECK(s.branch == Branch::Explore);
    ++counts[s.position];
  }
  const double p = 1.0 / 20, sigma = std::sqrt(draws * p * (1 - p));
  for (int n : counts) CHECK(std::abs(n - draws * p) <= 3 * sigma);
}

TEST_CASE("epsilon-greedy mixture law at eps 0.1") {
  const auto c = ranked(20);
  std::vector<double> probs(20, 0.0);
  probs[0] = 0.5, probs[1] = 0.3, probs[2] = 0.2;
  Rng rng(3);
  const int draws = 100000;
  std::vector<int> counts(20, 0);
  for (int t = 0; t < draws; ++t) ++counts[epsilon_greedy_sample(c, probs, 3, 0.1, {}, rng).position];
  int outside = 0;
  const double p = 0.1 / 20, sigma = std::sqrt(draws * p * (1 - p));
  for (int i = 3; i < 20; ++i) {
    outside += counts[i];
    CHECK(std::abs(counts[i] - draws * p) <= 3 * sigma);
  }
  const double agg = 0.085, agg_sigma = std::sqrt(draws * agg * (1 - agg));
  CHECK(std::abs(outside - draws * agg) <= 3 * agg_sigma);
}

TEST_CASE("exhausted candidates are an error") {
  const auto c = ranked(2);
  const std::vector<double> probs = {0.5, 0.5};
  Rng rng(4);
  CHECK_THROWS_AS(epsilon_greedy_sample(c, probs, 3, 0.1, {0, 1}, rng), InputError);
}

TEST_CASE("accumulated argmax breaks ties toward the lowest label") {
  CHECK(accumulated_argmax(std::vector<double>{0.7, 0.7, 0.6}) == 0);
  CHECK(accumulated_argmax(std::vector<double>{0.1, 0.9, 0.9}) == 1);
}

TEST_CASE("question selection") {
  Rng rng(5);
  const std::vector<double> rewards = {0.9, 0.2, 0.5, 0.7, 0.4};
  CHECK(select_questions(rewards, 3, 0.0, rng) == std::vector<std::size_t>{1, 4, 2});

  const int runs = 10000;
  std::vector<int> chosen(5, 0);
  for (int t = 0; t < runs; ++t) {
    for (auto q : select_questions(rewards, 3, 1.0, rng)) ++chosen[q];
  }
  const double p = 0.6, sigma = std::sqrt(runs * p * (1 - p));
  for (int n : chosen) CHECK(std::abs(n - runs * p) <= 3 * sigma);
}

TEST_CASE("document episode: termination on the first sample") {
  World w;
  ScriptedOracle oracle(ffrr::testing::three_labels());
  for (const auto& d : w.corpus->documents()) oracle.per_doc[d.id] = {0.6, 0.3, 0.1};
  Rng rng(6);
  const auto e = run_document_episode(Claim{"c", "w1 v1 shared", 0, {}}, w.index, w.params, oracle,
                                      config(PolicyMode::Document), rng);
  CHECK(e.kappa == 1);
  CHECK(e.k == 1);
  CHECK(e.final_slots.size() == 1);
  CHECK(e.final_reward == doctest::Approx(0.6));
}

TEST_CASE("document episode: gold never wins within the cap") {
  World w;
  ScriptedOracle oracle(ffrr::testing::three_labels());
  for (const auto& d : w.corpus->documents()) oracle.per_doc[d.id] = {0.6, 0.3, 0.1};
  Rng rng(7);
  const auto e = run_document_episode(Claim{"c", "w1 v1 shared", 2, {}}, w.index, w.params, oracle,
                                      config(PolicyMode::Document), rng);
  CHECK(e.kappa == 6);
  CHECK(e.k == 3);
  CHECK(e.actions.size() == 6);
  std::set<std::uint32_t> distinct;
  for (const auto& a : e.actions) distinct.insert(a.slot());
  CHECK(distinct.size() == 6);
  CHECK(e.oracle_calls == 7);
}

TEST_CASE("document episode: kappa 2 gives k 2 and a two-document final reward") {
  World w;
  ffrr::testing::SequenceOracle oracle(ffrr::testing::three_labels(),
                                       {{0.1, 0.6, 0.3}, {0.6, 0.1, 0.3}, {0.2, 0.2, 0.6}});
  Rng rng(8);
  const auto e = run_document_episode(Claim{"c", "w1 v1 shared", 0, {}}, w.index, w.params, oracle,
                                      config(PolicyMode::Document), rng);
  CHECK(e.kappa == 2);
  CHECK(e.k == 2);
  CHECK(e.final_slots.size() == 2);
  CHECK(e.final_reward == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("document episodes respect the episode invariants and reproduce under a seed") {
  World w;
  SimulatedOracleSpec spec;
  const auto& docs = w.corpus->documents();
  for (int i = 0; i < 10; ++i) {
    spec.hidden_evidence["c" + std::to_string(i)] = {docs[i].id, docs[i + 10].id};
    spec.gold["c" + std::to_string(i)] = i % 3;
  }
  SimulatedOracle oracle(ffrr::testing::three_labels(), spec, *w.corpus);
  for (int i = 0; i < 10; ++i) {
    const Claim claim{"c" + std::to_string(i), "w" + std::to_string(i) + " shared", std::size_t(i % 3), {}};
    const auto cfg = config(PolicyMode::Document, 0.3);
    Rng a(100 + i), b(100 + i);
    const auto e = run_document_episode(claim, w.index, w.params, oracle, cfg, a);
    const auto again = run_document_episode(claim, w.index, w.params, oracle, cfg, b);
    REQUIRE(e.actions.size() == again.actions.size());
    for (std::size_t j = 0; j < e.actions.size(); ++j) CHECK(e.actions[j].slot() == again.actions[j].slot());
    CHECK(e.final_reward == again.final_reward);

    CHECK(e.kappa <= cfg.max_samples);
    CHECK(e.k <= cfg.top_k);
    CHECK(e.kappa == reaccumulated_kappa(e, claim.gold, cfg.max_samples));
    std::set<std::uint32_t> distinct;
    for (const auto& act : e.actions) {
      distinct.insert(act.slot());
      CHECK((act.reward >= 0.0 && act.reward <= 1.0));
      CHECK(act.scores.size() == act.candidates.size());
    }
    CHECK(distinct.size() == e.actions.size());
  }
}

TEST_CASE("question episode: k = min(K, |Q|) and ascending-reward greedy picks") {
  World w;
  ScriptedOracle oracle(ffrr::testing::three_labels());
  Rng rng(9);
  const Claim two{"c", "claim", 0, {"w1 v1", "w2 v2"}};
  const auto e = run_question_episode(two, w.index, w.params, oracle, config(PolicyMode::Question, 0.0), rng);
  CHECK(e.k == 2);
  CHECK(e.kappa == 2);
  CHECK(e.selected_questions.size() == 2);

  ScriptedOracle graded(ffrr::testing::three_labels());
  const Claim five{"c", "claim", 0, {"w0 v0", "w1 v1", "w2 v2", "w3 v3", "w4 v4"}};
  const std::vector<double> r = {0.9, 0.2, 0.5, 0.7, 0.4};
  auto probe = run_question_episode(five, w.index, w.params, graded, config(PolicyMode::Question, 0.0), rng);
  for (std::size_t i = 0; i < 5; ++i) {
    graded.per_doc[w.index.id(probe.questions[i].top_slot)] = {r[i], 1 - r[i], 0.0};
  }
  const auto e5 = run_question_episode(five, w.index, w.params, graded, config(PolicyMode::Question, 0.0), rng);
  CHECK(e5.selected_questions == std::vector<std::size_t>{1, 4, 2});
  CHECK(e5.k == 3);
  for (std::size_t i = 0; i < 5; ++i) CHECK(e5.questions[i].reward == doctest::Approx(r[i]));
  CHECK(e5.questions[1].selection_order == 0u);
  CHECK_FALSE(e5.questions[0].selection_order.has_value());
}

TEST_CASE("question episode falls back to the claim text") {
  World w;
  ScriptedOracle oracle(ffrr::testing::three_labels());
  Rng rng(10);
  const auto e = run_question_episode(Claim{"c", "w3 v3", 0, {}}, w.index, w.params, oracle,
                                      config(PolicyMode::Question), rng);
  CHECK(e.question_fallback);
  REQUIRE(e.questions.size() == 1);
  CHECK(e.questions[0].text == "w3 v3");
}

TEST_CASE("hybrid episode loop bounds") {
  World w;
  ScriptedOracle oracle(ffrr::testing::three_labels());
  for (const auto& d : w.corpus->documents()) oracle.per_doc[d.id] = {0.1, 0.3, 0.6};
  Rng rng(11);
  const Claim claim{"c", "claim", 0, {"w1 v1", "w2 v2", "w3 v3", "w4 v4"}};
  const auto e = run_hybrid_episode(claim, w.index, w.params, oracle, config(PolicyMode::Hybrid), rng);
  CHECK(e.selected_questions.size() == 3);
  std::size_t question_actions = 0;
  for (const auto& a : e.actions) question_actions += a.level == ActionLevel::Question;
  CHECK(question_actions == 3);
  for (auto qi : e.selected_questions) {
    CHECK(e.questions[qi].inner_samples >= 1);
    CHECK(e.questions[qi].inner_samples <= 3);
  }
}

TEST_CASE("hybrid episode: first-sample termination costs k + 1 oracle calls") {
  World w(30, 40.0);
  ScriptedOracle oracle(ffrr::testing::three_labels());
  for (const auto& d : w.corpus->documents()) oracle.per_doc[d.id] = {0.8, 0.1, 0.1};
  Rng rng(12);
  const Claim claim{"c", "claim", 0, {"w1 v1", "w2 v2", "w3 v3"}};
  const auto e = run_hybrid_episode(claim, w.index, w.params, oracle, config(PolicyMode::Hybrid, 0.0), rng);
  CHECK(e.k == 3);
  for (auto qi : e.selected_questions) CHECK(e.questions[qi].inner_samples == 1);
  CHECK(e.oracle_requests == 3 + 3 + 3 + 1);
  CHECK(e.oracle_calls == e.k + 1);
  CHECK(oracle.calls() == e.k + 1);
}

TEST_CASE("inference selection") {
  World w;
  auto cfg = config(PolicyMode::Document);
  const Claim claim{"c", "w5 v5 shared", 0, {"w1 v1", "w2 shared", "w7", "v9 w9 w3", "w4"}};
  const auto d = select_inference_docs(claim, w.index, w.params, cfg);
  const auto top = retrieve(w.index, claim.text, w.params, 3);
  REQUIRE(d.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(d[i] == top.entries[i].slot);
  CHECK(d == select_inference_docs(claim, w.index, w.params, cfg));

  cfg.mode = PolicyMode::Question;
  std::vector<std::pair<double, std::uint32_t>> by_prob;
  for (const auto& q : claim.questions) {
    const auto pool = retrieve(w.index, q, w.params, cfg.pool_size);
    by_prob.emplace_back(distribution(pool.scores(), 1.0)[0], pool.entries[0].slot);
  }
  std::stable_sort(by_prob.begin(), by_prob.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::vector<std::uint32_t> expect;
  for (const auto& [p, slot] : by_prob) {
    if (expect.size() < 3 && std::find(expect.begin(), expect.end(), slot) == expect.end()) expect.push_back(slot);
  }
  CHECK(select_inference_docs(claim, w.index, w.params, cfg) == expect);

  const Claim two{"c", "x", 0, {"w1 v1", "w2 v2"}};
  CHECK(select_inference_docs(two, w.index, w.params, cfg).size() == 2);

  const Claim single{"c", "x", 0, {"w8 v8 shared"}};
  auto dcfg = config(PolicyMode::Document);
  const Claim as_claim{"c", "w8 v8 shared", 0, {}};
  CHECK(select_inference_docs(single, w.index, w.params, cfg)[0] ==
        select_inference_docs(as_claim, w.index, w.params, dcfg)[0]);
}

TEST_CASE("episode trace has one record per action") {
  World w;
  ScriptedOracle oracle(ffrr::testing::three_labels());
  Rng rng(13);
  const auto e = run_hybrid_episode(Claim{"c", "claim", 1, {"w1 v1", "w2 v2"}}, w.index, w.params, oracle,
                                    config(PolicyMode::Hybrid), rng);
  std::ostringstream out;
  write_episode_trace(out, e, w.index);
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("claim_id") == "c");
    ++n;
  }
  CHECK(n == e.actions.size());
}

}  // TEST_SUITE
