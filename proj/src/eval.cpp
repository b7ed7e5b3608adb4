#include "ffrr/eval.hpp"

#include <fstream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "ffrr/errors.hpp"

namespace ffrr {

using nlohmann::json;

Prediction predict(const Claim& claim, const DenseIndex& index, const EncoderParams& params,
                   Oracle& oracle, const PolicyConfig& cfg) {
  const auto slots = select_inference_docs(claim, index, params, cfg);
  std::vector<const Document*> docs;
  Prediction p;
  p.claim_id = claim.id;
  for (auto s : slots) {
    docs.push_back(&index.document(s));
    p.doc_ids.push_back(index.id(s));
  }
  p.distribution = oracle.score(claim, docs);
  check_distribution(p.distribution);
  p.predicted = p.distribution.argmax();
  return p;
}

EvalReport macro_prf_from_confusion(const LabelSet& labels,
                                    const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t n = labels.size();
  if (confusion.size() != n) throw DimensionError("confusion matrix does not match the label set");
  for (const auto& row : confusion) {
    if (row.size() != n) throw DimensionError("confusion matrix is not square");
  }
  EvalReport r;
  r.labels = labels;
  r.confusion = confusion;
  r.per_class.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t predicted = 0;
    std::size_t gold = 0;
    for (std::size_t o = 0; o < n; ++o) {
      predicted += confusion[o][c];
      gold += confusion[c][o];
    }
    r.claim_count += gold;
    auto& m = r.per_class[c];
    const double tp = static_cast<double>(confusion[c][c]);
    m.support = gold;
    m.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    m.recall = gold ? tp / static_cast<double>(gold) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.mean_class_f1 += m.f1;
  }
  if (n) {
    r.macro_precision /= static_cast<double>(n);
    r.macro_recall /= static_cast<double>(n);
    r.mean_class_f1 /= static_cast<double>(n);
  }
  const double pr = r.macro_precision + r.macro_recall;
  r.macro_f1 = pr > 0.0 ? 2.0 * r.macro_precision * r.macro_recall / pr : 0.0;
  return r;
}

EvalReport macro_prf(const std::vector<Prediction>& predictions, const ClaimSet& golds) {
  std::unordered_map<std::string_view, std::size_t> gold;
  for (const auto& c : golds.claims()) gold.emplace(c.id, c.gold);
  const std::size_t n = golds.labels().size();
  std::vector<std::vector<std::size_t>> confusion(n, std::vector<std::size_t>(n, 0));
  std::unordered_set<std::string_view> seen;
  for (const auto& p : predictions) {
    auto it = gold.find(p.claim_id);
    if (it == gold.end()) throw InputError("prediction for unknown claim '" + p.claim_id + "'");
    if (!seen.insert(p.claim_id).second) throw InputError("duplicate prediction for claim '" + p.claim_id + "'");
    if (p.predicted >= n) throw InputError("predicted label out of range for claim '" + p.claim_id + "'");
    ++confusion[it->second][p.predicted];
  }
  return macro_prf_from_confusion(golds.labels(), confusion);
}

EvaluateResult evaluate(const ClaimSet& split, const DenseIndex& index, const EncoderParams& params,
                        Oracle& oracle, const PolicyConfig& cfg,
                        const std::optional<std::filesystem::path>& report_path,
                        const json* config_echo) {
  if (split.empty()) throw InputError("cannot evaluate an empty split");
  const auto& claims = split.claims();
  std::vector<std::optional<Prediction>> slots(claims.size());
  std::vector<std::exception_ptr> errors(claims.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < claims.size(); ++i) {
    try {
      slots[i] = predict(claims[i], index, params, oracle, cfg);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }

  EvaluateResult out;
  std::vector<std::string> unevaluated;
  for (std::size_t i = 0; i < claims.size(); ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const OracleError& e) {
        spdlog::warn("claim '{}' unevaluated: {}", claims[i].id, e.what());
        unevaluated.push_back(claims[i].id);
      }
      continue;
    }
    out.predictions.push_back(std::move(*slots[i]));
  }
  out.report = macro_prf(out.predictions, split);
  out.report.unevaluated = std::move(unevaluated);

  if (report_path) {
    if (report_path->has_parent_path()) std::filesystem::create_directories(report_path->parent_path());
    std::ofstream file(*report_path, std::ios::trunc);
    if (!file) throw InputError("cannot write report '" + report_path->string() + "'");
    write_report(file, out.report, config_echo);
  }
  return out;
}

void write_report(std::ostream& out, const EvalReport& report, const json* config_echo) {
  if (config_echo) out << json{{"config", *config_echo}}.dump() << '\n';
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    out << json{{"class", report.labels.name(c)},
                {"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1},
                {"support", m.support}}
               .dump()
        << '\n';
  }
  out << json{{"macro",
               {{"precision", report.macro_precision},
                {"recall", report.macro_recall},
                {"f1", report.macro_f1},
                {"mean_class_f1", report.mean_class_f1},
                {"claims", report.claim_count}}}}
             .dump()
      << '\n';
  out << json{{"labels", report.labels.names()}, {"confusion", report.confusion}}.dump() << '\n';
  out << json{{"unevaluated", report.unevaluated}}.dump() << '\n';
}

}  // namespace ffrr
