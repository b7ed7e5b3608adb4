#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ffrr/datamodel.hpp"

namespace ffrr {

enum class Provenance { Simulated, Remote };

/// Per-label scores for one (claim, documents) input. Sums to 1.
struct LabelScoreDistribution {
  std::vector<double> scores;
  Provenance provenance = Provenance::Simulated;

  std::size_t size() const noexcept { return scores.size(); }
  double operator[](std::size_t label) const { return scores.at(label); }
  /// Highest score; ties go to the lowest label index.
  std::size_t argmax() const;
};

/// Throws OracleError unless the scores lie in [0,1] and sum to 1 +- 1e-9.
void check_distribution(const LabelScoreDistribution& dist);

using DocumentRefs = std::span<const Document* const>;

/// Black-box label scorer. Implementations must be safe for concurrent
/// calls.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual const LabelSet& labels() const = 0;
  virtual LabelScoreDistribution score(const Claim& claim, DocumentRefs docs) = 0;
  /// Intermediate questions for the claim, duplicates removed.
  virtual std::vector<std::string> decompose(const Claim& claim) = 0;
};

/// Gold-label entry of score(claim, docs).
double reward(Oracle& oracle, const Claim& claim, DocumentRefs docs);

enum class DistractorRule {
  Uniform,  // non-gold mass shared equally
  Next,     // all non-gold mass on label (gold + 1) mod L
};

struct SimulatedOracleSpec {
  std::map<std::string, std::set<std::string>> hidden_evidence;  // claim id -> doc ids
  std::map<std::string, std::size_t> gold;                       // claim id -> label
  double sharpness = 4.0;
  DistractorRule distractor = DistractorRule::Uniform;
  std::size_t max_documents = 16;
};

/// Offline oracle. The gold label scores
///   sigmoid(sharpness * (2 * |docs n hidden| / |hidden| - 1))
/// and the rest of the mass goes to the other labels per the distractor rule.
class SimulatedOracle : public Oracle {
 public:
  /// Checks every referenced claim and document exists.
  SimulatedOracle(LabelSet labels, SimulatedOracleSpec spec, const Corpus& corpus);

  const LabelSet& labels() const override { return labels_; }
  LabelScoreDistribution score(const Claim& claim, DocumentRefs docs) override;
  std::vector<std::string> decompose(const Claim& claim) override;

  const SimulatedOracleSpec& spec() const noexcept { return spec_; }
  std::size_t score_calls() const noexcept { return score_calls_.load(); }

 private:
  LabelSet labels_;
  SimulatedOracleSpec spec_;
  std::atomic<std::size_t> score_calls_{0};
};

/// Reads a hidden-evidence file: one {"claim_id": .., "doc_ids": [..]} per line.
std::map<std::string, std::set<std::string>> read_evidence(std::istream& in,
                                                           const std::string& source = "<stream>");
void write_evidence(std::ostream& out, const std::map<std::string, std::set<std::string>>& evidence);

double logistic(double x) noexcept;

}  // namespace ffrr
