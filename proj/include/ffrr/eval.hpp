#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ffrr/datamodel.hpp"
#include "ffrr/encoder.hpp"
#include "ffrr/index.hpp"
#include "ffrr/oracle.hpp"
#include "ffrr/policy.hpp"

namespace ffrr {

struct Prediction {
  std::string claim_id;
  std::size_t predicted = 0;
  LabelScoreDistribution distribution;
  std::vector<std::string> doc_ids;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count
};

struct EvalReport {
  LabelSet labels;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;       // 2PR/(P+R) over the macro means (headline)
  double mean_class_f1 = 0.0;  // unweighted mean of per-class F1
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
  std::size_t claim_count = 0;
  std::vector<std::string> unevaluated;  // claims whose oracle call failed
};

/// Retrieves evidence with select_inference_docs and asks the oracle once.
Prediction predict(const Claim& claim, const DenseIndex& index, const EncoderParams& params,
                   Oracle& oracle, const PolicyConfig& cfg);

/// Per-class P = TP/(TP+FP), R = TP/(TP+FN), 0 on a zero denominator;
/// macro means over every label in the set. Throws InputError on unknown or
/// duplicated claim ids.
EvalReport macro_prf(const std::vector<Prediction>& predictions, const ClaimSet& golds);

/// Same metrics from a [gold][predicted] count matrix.
EvalReport macro_prf_from_confusion(const LabelSet& labels,
                                    const std::vector<std::vector<std::size_t>>& confusion);

struct EvaluateResult {
  EvalReport report;
  std::vector<Prediction> predictions;
};

/// Predicts every claim of a non-empty split (in parallel) and aggregates.
/// Writes the report when `report_path` is set; `config_echo` is copied
/// into the report for provenance.
EvaluateResult evaluate(const ClaimSet& split, const DenseIndex& index, const EncoderParams& params,
                        Oracle& oracle, const PolicyConfig& cfg,
                        const std::optional<std::filesystem::path>& report_path = std::nullopt,
                        const nlohmann::json* config_echo = nullptr);

/// Line-delimited report: config echo, one line per class, macro block,
/// confusion matrix, unevaluated claims.
void write_report(std::ostream& out, const EvalReport& report, const nlohmann::json* config_echo);

}  // namespace ffrr
