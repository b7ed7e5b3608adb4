#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ffrr/datamodel.hpp"

namespace ffrr {

struct PredictionDemo {
  std::string claim;
  std::string evidence;
  std::string label;
};

struct DecompositionDemo {
  std::string claim;
  std::vector<std::string> questions;
};

/// In-context demonstrations for the prediction and decomposition prompts.
///
/// File format: `[prediction]` and `[decomposition]` section headers; each
/// demonstration is a block of `key: value` lines and blocks are separated
/// by a line holding `---`. Prediction blocks take `claim`, `evidence` and
/// `label`; decomposition blocks take `claim` and one `question` line per
/// question. Lines starting with `#` are comments.
struct PromptTemplates {
  std::vector<PredictionDemo> prediction;
  std::vector<DecompositionDemo> decomposition;
};

PromptTemplates read_prompts(std::istream& in, const std::string& source = "<stream>");
PromptTemplates load_prompts(const std::filesystem::path& path);

std::string render_label_set(const LabelSet& labels);

/// One prediction block; `label` empty renders the open query form ending in
/// "can be classified as".
std::string render_prediction_block(std::string_view evidence, std::string_view label_set,
                                    std::string_view claim, std::string_view label);

/// First `shots` prediction demonstrations, a blank line, then the query
/// block over `documents` (joined with ", ").
std::string render_prediction_prompt(const PromptTemplates& templates, std::size_t shots,
                                     const LabelSet& labels, std::string_view claim,
                                     const std::vector<std::string_view>& documents);

/// All decomposition demonstrations followed by the target claim, ending
/// with the "Here are the specific questions raised:" line.
std::string render_decomposition_prompt(const PromptTemplates& templates, std::string_view claim);

/// Lines starting with "Question:" in order, stopping at the next "Claim:"
/// line. Exact duplicates are dropped, keeping the first.
std::vector<std::string> parse_questions(std::string_view completion);

}  // namespace ffrr
