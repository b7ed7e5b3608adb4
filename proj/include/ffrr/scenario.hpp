#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>

#include "ffrr/datamodel.hpp"
#include "ffrr/oracle.hpp"
#include "ffrr/policy.hpp"
#include "ffrr/trainer.hpp"

namespace ffrr {

/// Synthetic claim-verification task with planted evidence.
///
/// Claim i reads "name{i} region{r} topic{t} bait bait w" with a unique
/// (topic, region) pair. Its hidden evidence documents hold the name, the
/// region and a topic-specific evidence word the claim never contains.
/// Per-claim distractors repeat name, region and topic cue, and per-topic
/// distractors repeat the cue and bait words, so a frozen encoder ranks
/// distractors above evidence. A second split of held-out claims shares the
/// corpus but is never trained on.
struct ScenarioConfig {
  std::size_t documents = 500;
  std::size_t claims = 60;  // per split: trained claims, and as many held-out claims
  std::size_t labels = 3;
  std::size_t hidden_per_claim = 2;
  std::size_t topics = 4;
  std::size_t bait_words = 4;
  std::size_t distractors_per_claim = 2;
  std::size_t distractors_per_topic = 5;
  std::size_t filler_words = 200;
  std::uint64_t seed = 42;
  std::uint32_t feature_dim = 1u << 15;
  std::uint32_t embedding_dim = 128;
};

struct Scenario {
  std::shared_ptr<const Corpus> corpus;
  ClaimSet train;
  ClaimSet test;
  SimulatedOracleSpec oracle;
};

/// Throws InputError when the document budget cannot hold the evidence.
Scenario generate_scenario(const ScenarioConfig& cfg);

/// Writes corpus.jsonl, train.jsonl, test.jsonl and evidence.jsonl.
void write_scenario(const Scenario& scenario, const std::filesystem::path& dir);

struct ScenarioMetrics {
  double recall = 0.0;    // mean |selected n hidden| / |hidden| at K
  double macro_f1 = 0.0;  // headline formula
  double mean_class_f1 = 0.0;
};

struct ScenarioResult {
  ScenarioMetrics before;  // trained claims
  ScenarioMetrics after;
  ScenarioMetrics held_out_before;
  ScenarioMetrics held_out_after;
  double seconds = 0.0;
  std::uint64_t updates = 0;
};

/// Hidden-evidence recall of the inference documents, averaged over claims.
double evidence_recall(const ClaimSet& claims, const DenseIndex& index, const EncoderParams& params,
                       const PolicyConfig& policy, const SimulatedOracleSpec& spec);

/// Frozen evaluation, training on the train split, evaluation again. The
/// retriever is measured on the claims it was trained for and on the
/// held-out split.
ScenarioResult run_scenario(const ScenarioConfig& scenario_cfg, const PolicyConfig& policy,
                            const TrainConfig& train, std::ostream* log = nullptr);

/// Training settings for the synthetic task. The task is tiny, so the
/// learning rate and epoch count differ from the library defaults.
TrainConfig scenario_train_defaults();

}  // namespace ffrr
