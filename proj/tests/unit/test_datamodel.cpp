#include "doctest.h"

#include <cmath>
#include <numeric>
#include <sstream>

#include "ffrr/datamodel.hpp"
#include "ffrr/errors.hpp"
#include "test_support.hpp"

using namespace ffrr;
using ffrr::testing::TempDir;

namespace {

const char* kThreeClaims =
    R"({"label_set": ["true", "half", "false"], "split": "test"})"
    "\n"
    R"({"id": "c1", "text": "The sky is green.", "label": "false"})"
    "\n"
    R"({"id": "c2", "text": "Water boils at 100 C.", "label": "true", "questions": ["At what pressure?"]})"
    "\n"
    R"({"id": "c3", "text": "Half of it is right.", "label": "half"})"
    "\n";

std::string claims_file(const std::vector<std::size_t>& counts, const std::vector<std::string>& labels) {
  nlohmann::json header{{"label_set", labels}, {"split", "train"}};
  std::string out = header.dump() + "\n";
  std::size_t n = 0;
  for (std::size_t y = 0; y < counts.size(); ++y) {
    for (std::size_t i = 0; i < counts[y]; ++i, ++n) {
      out += nlohmann::json{{"id", "c" + std::to_string(n)}, {"text", "claim " + std::to_string(n)},
                            {"label", labels[y]}}.dump() + "\n";
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("datamodel") {

TEST_CASE("three records load in order with their labels") {
  std::istringstream in(kThreeClaims);
  const ClaimSet set = read_claims(in);
  REQUIRE(set.size() == 3);
  CHECK(set.split() == Split::Test);
  CHECK(set.labels().names() == std::vector<std::string>{"true", "half", "false"});
  CHECK(set.claims()[0].id == "c1");
  CHECK(set.claims()[0].gold == 2);
  CHECK(set.claims()[1].questions == std::vector<std::string>{"At what pressure?"});
  CHECK(set.claims()[2].gold == 1);
  CHECK(set.find("c2") == &set.claims()[1]);
  CHECK(set.find("nope") == nullptr);
}

TEST_CASE("unknown label is reported with its line number") {
  std::istringstream in(R"({"label_set": ["true", "half", "false"]})"
                        "\n"
                        R"({"id": "a", "text": "x", "label": "true"})"
                        "\n"
                        R"({"id": "b", "text": "y", "label": "mostly"})"
                        "\n");
  try {
    read_claims(in, "claims.jsonl");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("mostly") != std::string::npos);
  }
}

TEST_CASE("malformed input is rejected") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return read_claims(in);
  };
  const std::string header = R"({"label_set": ["a", "b"]})"
                             "\n";
  CHECK_THROWS_AS(parse(header + R"({"id": "x", "text": "t", "label": "a"})"
                                 "\n"
                                 R"({"id": "x", "text": "u", "label": "b"})"),
                  ParseError);
  CHECK_THROWS_AS(parse(header + "{not json"), ParseError);
  CHECK_THROWS_AS(parse(header + R"({"id": "x", "label": "a"})"), ParseError);
  CHECK_THROWS_AS(parse(header + R"({"id": "x", "text": "", "label": "a"})"), ParseError);
  CHECK_THROWS_AS(parse(header + R"({"id": "x", "text": "t", "label": "a", "questions": ["q", "q"]})"),
                  ParseError);
  CHECK_THROWS_AS(parse(R"({"id": "x", "text": "t", "label": "a"})"), ParseError);
  CHECK_THROWS_AS(parse(R"({"label_set": ["a", "a"]})"), InputError);
  CHECK_THROWS_AS(load_claims("/nonexistent/claims.jsonl"), InputError);
}

TEST_CASE("claims round-trip through the file format") {
  std::istringstream in(kThreeClaims);
  const ClaimSet set = read_claims(in);
  std::ostringstream out;
  write_claims(out, set);
  std::istringstream again(out.str());
  CHECK(read_claims(again) == set);
}

TEST_CASE("corpus loading, exclusions and round-trip") {
  TempDir dir("datamodel");
  {
    std::ofstream f(dir / "corpus.jsonl");
    for (int i = 0; i < 10; ++i) f << nlohmann::json{{"id", "d" + std::to_string(i)}, {"text", "doc " + std::to_string(i)}}.dump() << "\n";
    std::ofstream x(dir / "excluded.txt");
    x << "d3\n\nd7\n";
  }
  const Corpus plain = load_corpus(dir / "corpus.jsonl");
  CHECK(plain.retrievable_count() == 10);
  const Corpus corpus = load_corpus(dir / "corpus.jsonl", dir / "excluded.txt");
  CHECK(corpus.size() == 10);
  CHECK(corpus.retrievable_count() == 8);
  CHECK_FALSE(corpus.is_retrievable("d3"));
  CHECK(corpus.is_retrievable("d4"));

  std::ostringstream docs, excl;
  write_corpus(docs, corpus);
  write_exclusions(excl, corpus);
  std::istringstream docs_in(docs.str()), excl_in(excl.str());
  CHECK(Corpus(read_documents(docs_in), read_exclusions(excl_in)) == corpus);
}

TEST_CASE("corpus invariants") {
  CHECK_THROWS_AS(Corpus(std::vector<Document>{{"a", "x"}, {"a", "y"}}), InputError);
  CHECK_THROWS_AS(Corpus(std::vector<Document>{{"a", ""}}), InputError);
  CHECK_THROWS_AS(Corpus({{"a", "x"}}, {"b"}), InputError);
  std::istringstream dup(R"({"id": "a", "text": "x"})"
                         "\n"
                         R"({"id": "a", "text": "y"})");
  CHECK_THROWS_AS(read_documents(dup), ParseError);
}

TEST_CASE("excluding 4.7% of documents leaves ceil(0.953 N) retrievable") {
  const std::size_t n = 2000;
  std::vector<Document> docs;
  std::set<std::string> excluded;
  const auto drop = static_cast<std::size_t>(std::llround(0.047 * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    docs.push_back({"d" + std::to_string(i), "text"});
    if (i < drop) excluded.insert("d" + std::to_string(i));
  }
  const Corpus corpus(std::move(docs), std::move(excluded));
  const double expected = std::ceil(0.953 * static_cast<double>(n));
  CHECK(std::abs(static_cast<double>(corpus.retrievable_count()) - expected) <= 1.0);
}

TEST_CASE("RAWFC-shaped file keeps its 695/671/646 class counts") {
  std::istringstream in(claims_file({695, 671, 646}, {"true", "half", "false"}));
  const ClaimSet set = read_claims(in);
  const auto report = validate(set, Corpus(std::vector<Document>{{"d", "x"}}));
  CHECK(report.claim_count == 2012);
  CHECK(report.label_histogram == std::vector<std::size_t>{695, 671, 646});
}

TEST_CASE("LIAR-RAW-sized set: six histogram bars summing to 12,590") {
  const std::vector<std::string> labels = {"true", "mostly-true", "half-true", "barely-true", "false", "pants-fire"};
  std::istringstream in(claims_file({2098, 2098, 2098, 2098, 2098, 2100}, labels));
  const ClaimSet set = read_claims(in);
  const auto report = validate(set, Corpus(std::vector<Document>{{"d", "x"}}));
  CHECK(report.label_histogram.size() == 6);
  CHECK(std::accumulate(report.label_histogram.begin(), report.label_histogram.end(), std::size_t{0}) == 12590);
}

TEST_CASE("validate reports without throwing") {
  std::istringstream in(kThreeClaims);
  const ClaimSet set = read_claims(in);
  const Corpus corpus({{"d1", "x"}, {"d2", "y"}}, {"d2"});
  const auto ok = validate(set, corpus);
  CHECK(ok.ok());
  CHECK(ok.corpus_size == 2);
  CHECK(ok.retrievable_size == 1);
  CHECK(ok.claims_without_questions == std::vector<std::string>{"c1", "c3"});
  CHECK(ok.label_histogram == std::vector<std::size_t>{1, 1, 1});

  auto bad = ClaimSet::unvalidated(ffrr::testing::three_labels(), Split::Train, {{"x", "text", 7, {}}});
  const auto report = validate(bad, corpus);
  CHECK_FALSE(report.ok());
  CHECK(report.violations.size() == 1);
}

TEST_CASE("questions set at runtime must satisfy the claim invariants") {
  std::istringstream in(kThreeClaims);
  ClaimSet set = read_claims(in);
  set.set_questions(0, {"Is the sky green?", "Who said so?"});
  CHECK(set.claims()[0].questions.size() == 2);
  CHECK_THROWS_AS(set.set_questions(0, {"same", "same"}), InputError);
  CHECK_THROWS_AS(set.set_questions(0, {""}), InputError);
}

}  // TEST_SUITE
