#include "ffrr/prompts.hpp"

#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

#include "ffrr/errors.hpp"

namespace ffrr {

namespace {

constexpr std::string_view kEvidenceIntro = "The following evidence is given: ";
constexpr std::string_view kDecompositionInstruction =
    "To verify the claim, a fact-checker will go through a step-by-step process to ask and answer "
    "a series of questions relevant to its factuality. Here are the specific questions raised:";

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

enum class Section { None, Prediction, Decomposition };

struct Block {
  std::size_t line = 0;
  std::vector<std::pair<std::string, std::string>> fields;
};

}  // namespace

PromptTemplates read_prompts(std::istream& in, const std::string& source) {
  PromptTemplates out;
  Section section = Section::None;
  Block block;
  std::string raw;
  std::size_t line_no = 0;

  auto flush = [&]() {
    if (block.fields.empty()) return;
    if (section == Section::Prediction) {
      PredictionDemo demo;
      for (const auto& [k, v] : block.fields) {
        if (k == "claim") demo.claim = v;
        else if (k == "evidence") demo.evidence = v;
        else if (k == "label") demo.label = v;
        else throw ParseError(source, block.line, "unknown prediction field '" + k + "'");
      }
      if (demo.claim.empty() || demo.label.empty()) {
        throw ParseError(source, block.line, "prediction demonstration needs claim and label");
      }
      out.prediction.push_back(std::move(demo));
    } else if (section == Section::Decomposition) {
      DecompositionDemo demo;
      for (const auto& [k, v] : block.fields) {
        if (k == "claim") demo.claim = v;
        else if (k == "question") demo.questions.push_back(v);
        else throw ParseError(source, block.line, "unknown decomposition field '" + k + "'");
      }
      if (demo.claim.empty() || demo.questions.empty()) {
        throw ParseError(source, block.line, "decomposition demonstration needs claim and questions");
      }
      out.decomposition.push_back(std::move(demo));
    } else {
      throw ParseError(source, block.line, "demonstration outside a section");
    }
    block = {};
  };

  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line == "[prediction]" || line == "[decomposition]") {
      flush();
      section = line == "[prediction]" ? Section::Prediction : Section::Decomposition;
      continue;
    }
    if (line == "---") {
      flush();
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw ParseError(source, line_no, "expected 'key: value'");
    if (block.fields.empty()) block.line = line_no;
    block.fields.emplace_back(std::string(trim(line.substr(0, colon))),
                              std::string(trim(line.substr(colon + 1))));
  }
  flush();
  return out;
}

PromptTemplates load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open prompts file '" + path.string() + "'");
  return read_prompts(in, path.string());
}

std::string render_label_set(const LabelSet& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ", ";
    out += labels.name(i);
  }
  return out;
}

std::string render_prediction_block(std::string_view evidence, std::string_view label_set,
                                    std::string_view claim, std::string_view label) {
  std::string out;
  out.append(kEvidenceIntro).append(evidence).append(". Among ").append(label_set);
  out.append(", the claim '''").append(claim).append("''' can be classified as");
  if (!label.empty()) out.append(" ").append(label).append(".");
  return out;
}

std::string render_prediction_prompt(const PromptTemplates& templates, std::size_t shots,
                                     const LabelSet& labels, std::string_view claim,
                                     const std::vector<std::string_view>& documents) {
  if (shots > templates.prediction.size()) {
    throw InputError("requested " + std::to_string(shots) + " demonstrations but only " +
                     std::to_string(templates.prediction.size()) + " are available");
  }
  const std::string label_set = render_label_set(labels);
  std::string out;
  for (std::size_t i = 0; i < shots; ++i) {
    const auto& d = templates.prediction[i];
    out += render_prediction_block(d.evidence, label_set, d.claim, d.label);
    out += '\n';
  }
  if (shots) out += '\n';
  std::string evidence;
  for (std::size_t i = 0; i < documents.size(); ++i) {
    if (i) evidence += ", ";
    evidence += documents[i];
  }
  out += render_prediction_block(evidence, label_set, claim, {});
  return out;
}

std::string render_decomposition_prompt(const PromptTemplates& templates, std::string_view claim) {
  std::string out;
  for (const auto& d : templates.decomposition) {
    out.append("Claim: ").append(d.claim).append("\n");
    out.append(kDecompositionInstruction).append("\n");
    for (const auto& q : d.questions) out.append("Question: ").append(q).append("\n");
    out += '\n';
  }
  out.append("Claim: ").append(claim).append("\n");
  out.append(kDecompositionInstruction).append("\n");
  return out;
}

std::vector<std::string> parse_questions(std::string_view completion) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::istringstream in{std::string(completion)};
  std::string raw;
  while (std::getline(in, raw)) {
    const std::string_view line = trim(raw);
    if (starts_with(line, "Claim:")) {
      if (!out.empty()) break;
      continue;
    }
    if (!starts_with(line, "Question:")) continue;
    std::string q(trim(line.substr(9)));
    if (q.empty()) continue;
    if (seen.insert(q).second) out.push_back(std::move(q));
  }
  return out;
}

}  // namespace ffrr
