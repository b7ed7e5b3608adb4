#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>

#include "ffrr/errors.hpp"
#include "ffrr/oracle.hpp"
#include "ffrr/prompts.hpp"
#include "ffrr/remote_oracle.hpp"
#include "ffrr/rng.hpp"
#include "test_support.hpp"

using namespace ffrr;
using ffrr::testing::StubCompletions;
using ffrr::testing::TempDir;

namespace {

// Values from tests/oracles/frozen_values.py.
constexpr double kSigmoid4 = 0.9820137900379085;
constexpr double kSigmoidMinus4 = 0.01798620996209156;
constexpr double kOtherShare = 0.008993104981045774;

const std::filesystem::path kSource = FFRR_SOURCE_DIR;
const char* kTokenEnv = "FFRR_TEST_TOKEN";

struct SimFixture {
  Corpus corpus{{{"e1", "evidence one"}, {"e2", "evidence two"}, {"x1", "noise"}, {"x2", "more noise"}}};
  Claim claim{"c1", "a claim", 1, {}};
  SimulatedOracleSpec spec;
  SimFixture() {
    spec.hidden_evidence["c1"] = {"e1", "e2"};
    spec.gold["c1"] = 1;
  }
  std::vector<const Document*> docs(std::initializer_list<const char*> ids) const {
    std::vector<const Document*> out;
    for (const char* id : ids) out.push_back(corpus.find(id));
    return out;
  }
};

RemoteOracleSpec stub_spec(const StubCompletions& stub) {
  RemoteOracleSpec spec;
  spec.endpoint = stub.endpoint();
  spec.token_env = kTokenEnv;
  spec.model = "stub-model";
  spec.backoff_initial = std::chrono::milliseconds(1);
  spec.timeout = std::chrono::milliseconds(5000);
  return spec;
}

PromptTemplates shipped_prompts() { return load_prompts(kSource / "data" / "prompts.txt"); }

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("simulated scores follow the logistic overlap rule") {
  SimFixture f;
  SimulatedOracle oracle(ffrr::testing::three_labels(), f.spec, f.corpus);

  const auto full = oracle.score(f.claim, f.docs({"e1", "e2"}));
  CHECK(full.provenance == Provenance::Simulated);
  CHECK(full[1] == doctest::Approx(kSigmoid4).epsilon(1e-15));
  CHECK(full[0] == doctest::Approx(kOtherShare).epsilon(1e-14));
  CHECK(full[2] == doctest::Approx(kOtherShare).epsilon(1e-14));

  const auto none = oracle.score(f.claim, f.docs({"x1", "x2"}));
  CHECK(none[1] == doctest::Approx(kSigmoidMinus4).epsilon(1e-14));
  CHECK(reward(oracle, f.claim, f.docs({"e1", "e2", "x1"})) == doctest::Approx(kSigmoid4).epsilon(1e-15));
  CHECK(reward(oracle, f.claim, f.docs({"e1"})) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(oracle.score_calls() == 4);
}

TEST_CASE("simulated reward is monotone in evidence overlap") {
  SimFixture f;
  SimulatedOracle oracle(ffrr::testing::three_labels(), f.spec, f.corpus);
  const std::vector<const char*> ids = {"e1", "e2", "x1", "x2"};
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<const Document*> a, b;
    std::size_t overlap_a = 0, overlap_b = 0;
    for (const char* id : ids) {
      const bool hidden = id[0] == 'e';
      if (rng.bernoulli(0.5)) a.push_back(f.corpus.find(id)), overlap_a += hidden;
      if (rng.bernoulli(0.5)) b.push_back(f.corpus.find(id)), overlap_b += hidden;
    }
    if (a.empty() || b.empty()) continue;
    const double ra = reward(oracle, f.claim, a), rb = reward(oracle, f.claim, b);
    if (overlap_a <= overlap_b) CHECK(ra <= rb);
    if (overlap_a >= overlap_b) CHECK(ra >= rb);
    CHECK(std::abs(sum(oracle.score(f.claim, a).scores) - 1.0) < 1e-9);
  }
}

TEST_CASE("simulated oracle errors and the next-label rule") {
  SimFixture f;
  f.spec.distractor = DistractorRule::Next;
  f.spec.max_documents = 2;
  SimulatedOracle oracle(ffrr::testing::three_labels(), f.spec, f.corpus);
  const auto d = oracle.score(f.claim, f.docs({"x1"}));
  CHECK(d[0] == 0.0);
  CHECK(d[2] == doctest::Approx(1.0 - kSigmoidMinus4));
  CHECK_THROWS_AS(oracle.score(f.claim, f.docs({"e1", "e2", "x1"})), OracleError);
  CHECK_THROWS_AS(oracle.score(f.claim, {}), OracleError);
  CHECK_THROWS_AS(oracle.score(Claim{"ghost", "x", 0, {}}, f.docs({"e1"})), OracleError);

  SimulatedOracleSpec bad = f.spec;
  bad.hidden_evidence["c1"].insert("missing");
  CHECK_THROWS_AS(SimulatedOracle(ffrr::testing::three_labels(), bad, f.corpus), InputError);
}

TEST_CASE("reward reads the gold entry") {
  ffrr::testing::ScriptedOracle oracle(ffrr::testing::three_labels());
  oracle.per_doc["d"] = {0.6, 0.3, 0.1};
  const Document doc{"d", "text"};
  const std::vector<const Document*> docs = {&doc};
  CHECK(reward(oracle, Claim{"c", "x", 0, {}}, docs) == 0.6);
  CHECK(reward(oracle, Claim{"c", "x", 2, {}}, docs) == 0.1);
  const Document other{"u", "text"};
  const std::vector<const Document*> uniform = {&other};
  CHECK(reward(oracle, Claim{"c", "x", 1, {}}, uniform) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("check_distribution") {
  CHECK_NOTHROW(check_distribution({{0.2, 0.8}, Provenance::Remote}));
  CHECK_THROWS_AS(check_distribution({{0.2, 0.7}, Provenance::Remote}), OracleError);
  CHECK_THROWS_AS(check_distribution({{-0.1, 1.1}, Provenance::Remote}), OracleError);
  CHECK(LabelScoreDistribution{{0.4, 0.4, 0.2}, Provenance::Simulated}.argmax() == 0);
}

TEST_CASE("simulated decomposition yields three stable questions") {
  SimFixture f;
  SimulatedOracle oracle(ffrr::testing::three_labels(), f.spec, f.corpus);
  const Claim claim{"c1", "JAG charges Nancy Pelosi with treason and seditious conspiracy.", 0, {}};
  const auto q = oracle.decompose(claim);
  CHECK(q.size() == 3);
  CHECK(q == oracle.decompose(claim));
  CHECK_NOTHROW(check_questions(q, claim.id));
}

TEST_CASE("evidence file round-trip") {
  std::map<std::string, std::set<std::string>> ev{{"c1", {"a", "b"}}, {"c2", {"z"}}};
  std::stringstream buf;
  write_evidence(buf, ev);
  CHECK(read_evidence(buf) == ev);
}

TEST_CASE("prompt rendering matches the golden files") {
  const auto templates = shipped_prompts();
  CHECK(templates.prediction.size() == 3);
  CHECK(templates.decomposition.size() == 3);
  const std::string claim = "JAG charges Nancy Pelosi with treason and seditious conspiracy.";
  const std::vector<std::string_view> docs = {"There is no record of a JAG tribunal charging Nancy Pelosi",
                                              "Military courts have no jurisdiction over members of Congress"};
  const auto prediction = render_prediction_prompt(templates, 2, ffrr::testing::three_labels(), claim, docs);
  CHECK(prediction == ffrr::testing::read_file(kSource / "tests" / "golden" / "jag_prediction.txt"));
  CHECK(render_decomposition_prompt(templates, claim) ==
        ffrr::testing::read_file(kSource / "tests" / "golden" / "jag_decomposition.txt"));
  CHECK_THROWS_AS(render_prediction_prompt(templates, 4, ffrr::testing::three_labels(), claim, docs), InputError);
}

TEST_CASE("prompts file parsing") {
  std::istringstream ok("# comment\n[prediction]\nclaim: c\nevidence: e\nlabel: true\n"
                        "[decomposition]\nclaim: d\nquestion: q1\nquestion: q2\n---\nclaim: d2\nquestion: q\n");
  const auto t = read_prompts(ok);
  CHECK(t.prediction.size() == 1);
  CHECK(t.decomposition.size() == 2);
  CHECK(t.decomposition[0].questions == std::vector<std::string>{"q1", "q2"});

  std::istringstream unknown("[prediction]\nclaim: c\nverdict: x\n");
  CHECK_THROWS_AS(read_prompts(unknown), ParseError);
  std::istringstream outside("claim: c\n");
  CHECK_THROWS_AS(read_prompts(outside), ParseError);
  std::istringstream missing("[prediction]\nclaim: c\nevidence: e\n");
  CHECK_THROWS_AS(read_prompts(missing), ParseError);
}

TEST_CASE("question parsing") {
  const auto q = parse_questions(
      "Question: Is it true that JAG has made a claim or accusation against Nancy Pelosi?\n"
      "Question: Is it true that the specific charges are treason?\n"
      "Question: Is it true that JAG has made a claim or accusation against Nancy Pelosi?\n"
      "\nClaim: another claim\nQuestion: leaked?\n");
  REQUIRE(q.size() == 2);
  CHECK(q[0].rfind("Is it true that JAG has made a claim", 0) == 0);
  CHECK(parse_questions("no questions here").empty());
}

TEST_CASE("label tokens") {
  CHECK(resolve_label_tokens(LabelSet({"True", "half-true", "FALSE"}), {}) ==
        std::vector<std::string>{"true", "half", "false"});
  CHECK_THROWS_AS(resolve_label_tokens(LabelSet({"half-true", "half-false"}), {}), InputError);
  CHECK(resolve_label_tokens(LabelSet({"half-true", "half-false"}), {" HT", "hf"}) ==
        std::vector<std::string>{"ht", "hf"});
  CHECK_THROWS_AS(resolve_label_tokens(LabelSet({"a", "b"}), {"x"}), InputError);
}

TEST_CASE("remote oracle against a local stub") {
  setenv(kTokenEnv, "secret-token", 1);
  StubCompletions stub;
  RemoteOracle oracle(ffrr::testing::three_labels(), stub_spec(stub), shipped_prompts());
  const Document d1{"d1", "first document"}, d2{"d2", "second document"};
  const std::vector<const Document*> docs = {&d1, &d2};
  const Claim claim{"c", "JAG charges Nancy Pelosi with treason and seditious conspiracy.", 2, {}};

  SUBCASE("label scores are a softmax over the label tokens") {
    const auto dist = oracle.score(claim, docs);
    CHECK(dist.provenance == Provenance::Remote);
    const double z = std::exp(-0.5) + std::exp(-1.2) + std::exp(-2.0);
    CHECK(dist[0] == doctest::Approx(std::exp(-0.5) / z).epsilon(1e-12));
    CHECK(dist[1] == doctest::Approx(std::exp(-1.2) / z).epsilon(1e-12));
    CHECK(dist[2] == doctest::Approx(std::exp(-2.0) / z).epsilon(1e-12));
    CHECK(std::abs(sum(dist.scores) - 1.0) < 1e-9);

    const auto body = nlohmann::json::parse(stub.bodies().at(0));
    CHECK(body.at("model") == "stub-model");
    CHECK(body.at("temperature") == 0);
    CHECK(body.at("max_tokens") == 1);
    CHECK(body.at("logprobs") == 5);
    CHECK(body.at("prompt") == oracle.prediction_prompt(claim, docs));
    CHECK(stub.auth_headers().at(0) == "Bearer secret-token");
  }

  SUBCASE("a label missing from the top list gets the floor score") {
    stub.top_logprobs = {{" true", -0.1}, {"half", -0.7}};
    const auto dist = oracle.score(claim, docs);
    const double z = std::exp(-0.1) + std::exp(-0.7) + 1e-6;
    CHECK(dist[2] == doctest::Approx(1e-6 / z).epsilon(1e-9));
  }

  SUBCASE("an identical prompt is served from cache") {
    const auto a = oracle.score(claim, docs);
    const auto before = stub.requests();
    const auto b = oracle.score(claim, docs);
    CHECK(stub.requests() == before);
    CHECK(oracle.cache_hits() == 1);
    CHECK(a.scores == b.scores);
  }

  SUBCASE("decomposition parses and deduplicates questions") {
    const auto q = oracle.decompose(claim);
    CHECK(q == std::vector<std::string>{"first?", "second?"});
    stub.completion_text = "nothing useful";
    const Claim other{"o", "Something else entirely.", 0, {}};
    CHECK_THROWS_AS(oracle.decompose(other), OracleError);
  }

  SUBCASE("retryable failures are retried, others are not") {
    stub.fail_first = 2;
    const auto dist = oracle.score(claim, docs);
    CHECK(stub.requests() == 3);
    CHECK(oracle.network_requests() == 3);
    CHECK(std::abs(sum(dist.scores) - 1.0) < 1e-9);

    stub.fail_first = 5;
    stub.fail_status = 400;
    const Claim other{"o", "A different claim.", 0, {}};
    CHECK_THROWS_AS(oracle.score(other, docs), OracleError);
    CHECK(stub.requests() == 4);
  }

  SUBCASE("over-budget prompts name the overflowing document") {
    auto spec = stub_spec(stub);
    spec.max_prompt_chars = oracle.prediction_prompt(claim, std::vector<const Document*>{&d1}).size() + 5;
    RemoteOracle tight(ffrr::testing::three_labels(), spec, shipped_prompts());
    try {
      tight.score(claim, docs);
      FAIL("expected an over-budget error");
    } catch (const OracleError& e) {
      CHECK(std::string(e.what()).find("'d2'") != std::string::npos);
    }
    CHECK(stub.requests() == 0);
  }
}

TEST_CASE("remote oracle honours the in-flight bound") {
  setenv(kTokenEnv, "secret-token", 1);
  StubCompletions stub;
  stub.delay = std::chrono::milliseconds(60);
  auto spec = stub_spec(stub);
  spec.max_in_flight = 2;
  RemoteOracle oracle(ffrr::testing::three_labels(), spec, shipped_prompts());
  const Document doc{"d", "a document"};
  const std::vector<const Document*> docs = {&doc};
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      const Claim c{"c" + std::to_string(i), "claim number " + std::to_string(i), 0, {}};
      if (std::abs(sum(oracle.score(c, docs).scores) - 1.0) < 1e-9) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 8);
  CHECK(stub.requests() == 8);
  CHECK(stub.max_in_flight() <= 2);
}

TEST_CASE("remote oracle disk cache survives a new client") {
  setenv(kTokenEnv, "secret-token", 1);
  StubCompletions stub;
  TempDir dir("cache");
  auto spec = stub_spec(stub);
  spec.cache_dir = dir.path();
  const Document doc{"d", "a document"};
  const std::vector<const Document*> docs = {&doc};
  const Claim claim{"c", "cached claim", 0, {}};
  RemoteOracle first(ffrr::testing::three_labels(), spec, shipped_prompts());
  const auto a = first.score(claim, docs);
  RemoteOracle second(ffrr::testing::three_labels(), spec, shipped_prompts());
  const auto b = second.score(claim, docs);
  CHECK(stub.requests() == 1);
  CHECK(second.network_requests() == 0);
  CHECK(a.scores == b.scores);
}

TEST_CASE("remote oracle refuses to run without a token") {
  StubCompletions stub;
  auto spec = stub_spec(stub);
  spec.token_env = "FFRR_TEST_TOKEN_THAT_IS_NOT_SET";
  unsetenv(spec.token_env.c_str());
  RemoteOracle oracle(ffrr::testing::three_labels(), spec, shipped_prompts());
  const Document doc{"d", "a document"};
  const std::vector<const Document*> docs = {&doc};
  CHECK_THROWS_AS(oracle.score(Claim{"c", "x", 0, {}}, docs), OracleError);
  CHECK(stub.requests() == 0);
}

}  // TEST_SUITE
