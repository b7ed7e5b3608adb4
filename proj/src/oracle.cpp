#include "ffrr/oracle.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "ffrr/encoder.hpp"
#include "ffrr/errors.hpp"
#include "json.hpp"

namespace ffrr {

using nlohmann::json;

std::size_t LabelScoreDistribution::argmax() const {
  if (scores.empty()) throw OracleError("argmax of an empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

void check_distribution(const LabelScoreDistribution& dist) {
  if (dist.scores.empty()) throw OracleError("oracle returned an empty distribution");
  double total = 0.0;
  for (double s : dist.scores) {
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) throw OracleError("oracle score outside [0,1]");
    total += s;
  }
  if (std::abs(total - 1.0) > 1e-9) throw OracleError("oracle scores do not sum to 1");
}

double reward(Oracle& oracle, const Claim& claim, DocumentRefs docs) {
  const auto dist = oracle.score(claim, docs);
  return dist[claim.gold];
}

double logistic(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

SimulatedOracle::SimulatedOracle(LabelSet labels, SimulatedOracleSpec spec, const Corpus& corpus)
    : labels_(std::move(labels)), spec_(std::move(spec)) {
  if (!(spec_.sharpness > 0.0)) throw InputError("simulated oracle sharpness must be positive");
  if (spec_.max_documents == 0) throw InputError("simulated oracle document limit must be positive");
  for (const auto& [claim_id, gold] : spec_.gold) {
    if (gold >= labels_.size()) throw InputError("gold label out of range for claim '" + claim_id + "'");
    auto it = spec_.hidden_evidence.find(claim_id);
    if (it == spec_.hidden_evidence.end() || it->second.empty()) {
      throw InputError("claim '" + claim_id + "' has no hidden evidence");
    }
  }
  for (const auto& [claim_id, docs] : spec_.hidden_evidence) {
    if (!spec_.gold.count(claim_id)) throw InputError("claim '" + claim_id + "' has no gold label");
    for (const auto& d : docs) {
      if (!corpus.find(d)) {
        throw InputError("hidden evidence '" + d + "' of claim '" + claim_id + "' is not in the corpus");
      }
    }
  }
}

LabelScoreDistribution SimulatedOracle::score(const Claim& claim, DocumentRefs docs) {
  ++score_calls_;
  if (docs.empty()) throw OracleError("score needs at least one document");
  if (docs.size() > spec_.max_documents) {
    throw OracleError("too many documents (" + std::to_string(docs.size()) + " > " +
                      std::to_string(spec_.max_documents) + "); first over the limit is '" +
                      docs[spec_.max_documents]->id + "'");
  }
  auto gold_it = spec_.gold.find(claim.id);
  auto hidden_it = spec_.hidden_evidence.find(claim.id);
  if (gold_it == spec_.gold.end() || hidden_it == spec_.hidden_evidence.end()) {
    throw OracleError("simulated oracle knows nothing about claim '" + claim.id + "'");
  }
  const auto& hidden = hidden_it->second;
  std::unordered_set<std::string_view> seen;
  std::size_t overlap = 0;
  for (const Document* d : docs) {
    if (seen.insert(d->id).second && hidden.count(d->id)) ++overlap;
  }
  const double fraction = static_cast<double>(overlap) / static_cast<double>(hidden.size());
  const std::size_t n = labels_.size();
  const std::size_t gold = gold_it->second;

  LabelScoreDistribution out;
  out.provenance = Provenance::Simulated;
  out.scores.assign(n, 0.0);
  if (n == 1) {
    out.scores[0] = 1.0;
    return out;
  }
  const double g = logistic(spec_.sharpness * (2.0 * fraction - 1.0));
  out.scores[gold] = g;
  if (spec_.distractor == DistractorRule::Uniform) {
    const double rest = (1.0 - g) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (i != gold) out.scores[i] = rest;
    }
  } else {
    out.scores[(gold + 1) % n] = 1.0 - g;
  }
  return out;
}

std::vector<std::string> SimulatedOracle::decompose(const Claim& claim) {
  const auto tokens = tokenize(claim.text);
  auto join = [&](std::size_t b, std::size_t e) {
    std::string s;
    for (std::size_t i = b; i < e; ++i) {
      if (!s.empty()) s += ' ';
      s += tokens[i];
    }
    return s;
  };
  const std::size_t n = tokens.size();
  const std::string head = n ? join(0, (n + 1) / 2) : claim.text;
  const std::string tail = n ? join(n / 2, n) : claim.text;
  const std::string all = n ? join(0, n) : claim.text;
  return {
      "Is it true that " + head + "?",
      "What is known about " + tail + "?",
      "Which sources report on " + all + "?",
  };
}

std::map<std::string, std::set<std::string>> read_evidence(std::istream& in, const std::string& source) {
  std::map<std::string, std::set<std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("claim_id") || !j["claim_id"].is_string() ||
        !j.contains("doc_ids") || !j["doc_ids"].is_array()) {
      throw ParseError(source, line_no, "expected {\"claim_id\": string, \"doc_ids\": [..]}");
    }
    auto& docs = out[j["claim_id"].get<std::string>()];
    for (const auto& d : j["doc_ids"]) {
      if (!d.is_string()) throw ParseError(source, line_no, "doc_ids must be strings");
      docs.insert(d.get<std::string>());
    }
  }
  return out;
}

void write_evidence(std::ostream& out, const std::map<std::string, std::set<std::string>>& evidence) {
  for (const auto& [claim, docs] : evidence) {
    out << json{{"claim_id", claim}, {"doc_ids", docs}}.dump() << '\n';
  }
}

}  // namespace ffrr
