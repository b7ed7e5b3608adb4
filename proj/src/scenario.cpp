#include "ffrr/scenario.hpp"

#include <chrono>
#include <fstream>

#include <spdlog/spdlog.h>

#include "ffrr/errors.hpp"
#include "ffrr/eval.hpp"
#include "ffrr/index.hpp"
#include "ffrr/rng.hpp"

namespace ffrr {

namespace {

std::string word(std::string_view stem, std::size_t i) { return std::string(stem) + std::to_string(i); }

LabelSet scenario_labels(std::size_t n) {
  if (n == 3) return LabelSet({"true", "half", "false"});
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(word("label", i));
  return LabelSet(std::move(names));
}

// k distinct indices from [0, n) in draw order.
std::vector<std::size_t> distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.index(n - i)]);
  pool.resize(k);
  return pool;
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& cfg) {
  if (cfg.labels < 2) throw InputError("scenario needs at least 2 labels");
  if (cfg.claims == 0 || cfg.hidden_per_claim == 0 || cfg.topics == 0) {
    throw InputError("scenario needs claims, topics and hidden evidence");
  }
  if (cfg.bait_words < 3 || cfg.filler_words < 4) throw InputError("scenario vocabulary too small");
  const std::size_t total_claims = 2 * cfg.claims;
  const std::size_t evidence_docs = total_claims * cfg.hidden_per_claim;
  if (cfg.documents < evidence_docs) {
    throw InputError("scenario needs at least " + std::to_string(evidence_docs) +
                     " documents for its evidence, got " + std::to_string(cfg.documents));
  }
  // Small corpora get fewer distractors rather than none.
  std::size_t budget = cfg.documents - evidence_docs;
  const std::size_t per_claim = std::min(cfg.distractors_per_claim, budget / total_claims);
  budget -= per_claim * total_claims;
  const std::size_t per_topic = std::min(cfg.distractors_per_topic, budget / cfg.topics);

  Rng rng(derive_seed(cfg.seed, "scenario"));
  auto filler = [&] { return word("w", rng.index(cfg.filler_words)); };
  auto bait = [&](std::size_t count) {
    std::string s;
    for (auto b : distinct(rng, cfg.bait_words, count)) s += " " + word("bait", b);
    return s;
  };

  std::vector<Document> docs;
  docs.reserve(cfg.documents);
  auto add_doc = [&](std::string text) {
    docs.push_back({word("doc", docs.size()), std::move(text)});
    return docs.back().id;
  };

  const LabelSet labels = scenario_labels(cfg.labels);
  Scenario out;
  std::vector<Claim> train_claims;
  std::vector<Claim> test_claims;
  // Claim i gets the unique (topic, region) pair (i mod T, i / T); a random
  // permutation decides which claims are held out, so test regions and
  // topics also occur in training.
  std::vector<std::size_t> order(total_claims);
  for (std::size_t i = 0; i < total_claims; ++i) order[i] = i;
  for (std::size_t i = total_claims; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  for (std::size_t n = 0; n < total_claims; ++n) {
    const std::size_t i = order[n];
    const std::size_t topic = i % cfg.topics;
    const bool is_train = n < cfg.claims;
    Claim c;
    c.id = is_train ? word("train", n) : word("test", n - cfg.claims);
    c.gold = rng.index(cfg.labels);
    const std::string name = word("name", i);
    const std::string region = word("region", i / cfg.topics);
    const std::string cue = word("topic", topic);
    c.text = name + " " + region + " " + cue + bait(2) + " " + filler();
    auto& hidden = out.oracle.hidden_evidence[c.id];
    for (std::size_t h = 0; h < cfg.hidden_per_claim; ++h) {
      hidden.insert(add_doc(name + " " + word("proof", topic) + " " + region + " " + filler()));
    }
    for (std::size_t d = 0; d < per_claim; ++d) {
      add_doc(name + " " + region + " " + cue + " " + filler() + " " + filler());
    }
    out.oracle.gold[c.id] = c.gold;
    (is_train ? train_claims : test_claims).push_back(std::move(c));
  }
  for (std::size_t t = 0; t < cfg.topics; ++t) {
    for (std::size_t d = 0; d < per_topic; ++d) {
      add_doc(word("topic", t) + bait(3) + " " + filler());
    }
  }
  while (docs.size() < cfg.documents) {
    add_doc(filler() + " " + filler() + " " + filler() + " " + filler());
  }

  out.corpus = std::make_shared<const Corpus>(std::move(docs));
  out.train = ClaimSet(labels, Split::Train, std::move(train_claims));
  out.test = ClaimSet(labels, Split::Test, std::move(test_claims));
  return out;
}

void write_scenario(const Scenario& scenario, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw InputError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("corpus.jsonl");
    write_corpus(f, *scenario.corpus);
  }
  save_claims(dir / "train.jsonl", scenario.train);
  save_claims(dir / "test.jsonl", scenario.test);
  {
    auto f = open("evidence.jsonl");
    write_evidence(f, scenario.oracle.hidden_evidence);
  }
}

double evidence_recall(const ClaimSet& claims, const DenseIndex& index, const EncoderParams& params,
                       const PolicyConfig& policy, const SimulatedOracleSpec& spec) {
  if (claims.empty()) return 0.0;
  double total = 0.0;
  for (const auto& c : claims.claims()) {
    const auto& hidden = spec.hidden_evidence.at(c.id);
    std::size_t hits = 0;
    for (auto slot : select_inference_docs(c, index, params, policy)) hits += hidden.count(index.id(slot));
    total += static_cast<double>(hits) / static_cast<double>(hidden.size());
  }
  return total / static_cast<double>(claims.size());
}

TrainConfig scenario_train_defaults() {
  TrainConfig t;
  t.learning_rate = 0.002;
  t.batch_size = 4;
  t.warmup_ratio = 0.1;
  t.epochs = 20;
  t.refresh_period = 50;
  t.seed = 42;
  return t;
}

ScenarioResult run_scenario(const ScenarioConfig& scenario_cfg, const PolicyConfig& policy,
                            const TrainConfig& train_cfg, std::ostream* log) {
  const auto started = std::chrono::steady_clock::now();
  Scenario sc = generate_scenario(scenario_cfg);
  SimulatedOracle oracle(sc.train.labels(), sc.oracle, *sc.corpus);
  if (policy.mode != PolicyMode::Document) {
    sc.train = ensure_questions(sc.train, oracle);
    sc.test = ensure_questions(sc.test, oracle);
  }

  auto params = EncoderParams::random(scenario_cfg.embedding_dim, scenario_cfg.feature_dim,
                                      derive_seed(scenario_cfg.seed, "encoder"));
  auto measure = [&](const ClaimSet& claims, const DenseIndex& index, const EncoderParams& p) {
    ScenarioMetrics m;
    m.recall = evidence_recall(claims, index, p, policy, sc.oracle);
    const auto eval = evaluate(claims, index, p, oracle, policy);
    m.macro_f1 = eval.report.macro_f1;
    m.mean_class_f1 = eval.report.mean_class_f1;
    return m;
  };

  ScenarioResult result;
  {
    const DenseIndex index = DenseIndex::build(sc.corpus, params);
    result.before = measure(sc.train, index, params);
    result.held_out_before = measure(sc.test, index, params);
  }
  auto state = TrainingState::initial(std::move(params), train_cfg, policy);
  TrainOptions options;
  options.log = log;
  train(state, sc.train, sc.corpus, oracle, options);
  {
    const DenseIndex index = DenseIndex::build(sc.corpus, state.params);
    result.after = measure(sc.train, index, state.params);
    result.held_out_after = measure(sc.test, index, state.params);
  }
  result.updates = state.updates;
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace ffrr
