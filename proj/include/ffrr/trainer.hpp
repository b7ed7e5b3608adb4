#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ffrr/datamodel.hpp"
#include "ffrr/encoder.hpp"
#include "ffrr/index.hpp"
#include "ffrr/oracle.hpp"
#include "ffrr/policy.hpp"

namespace ffrr {

enum class Algorithm { Ffrr, Replug };
std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);
std::string_view to_string(KlDirection direction);
KlDirection parse_kl_direction(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 4;
  double warmup_ratio = 0.1;
  std::size_t epochs = 1;
  std::size_t refresh_period = 50;
  bool baseline = false;
  double baseline_decay = 0.99;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::Ffrr;
  double replug_beta = 1.0;
  KlDirection kl_direction = KlDirection::RetrievalToRated;

  void validate() const;
};

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  static AdamState zeros(const EncoderParams& params);
  bool operator==(const AdamState&) const = default;
};

/// One Adam minimization step on `loss_grad` at learning rate `lr`.
/// `scratch` is a zero-filled rows*cols buffer; it is left zero-filled.
void adam_apply(EncoderParams& params, AdamState& adam, const Gradient& loss_grad, double lr,
                std::vector<double>& scratch);

/// Linear warmup over the first warmup*total updates, constant after.
/// `update` is 1-based.
double warmup_lr(double base_lr, double warmup_ratio, std::uint64_t update, std::uint64_t total);

/// R(q, d) for an action: intermediate reward, plus lambda * r_g when the
/// action's document is among the documents behind r_g.
double episode_return(const Episode& episode, std::size_t action, double lambda);

/// Exponential moving average of returns; disabled by default.
struct ReturnBaseline {
  bool enabled = false;
  double decay = 0.99;
  double value = 0.0;
  bool initialized = false;

  double apply(double ret) const { return enabled ? ret - value : ret; }
  void observe(double ret);
};

struct UpdateStats {
  double lr = 0.0;
  double mean_return = 0.0;
  double mean_kappa = 0.0;
  double loss = 0.0;  // surrogate -mean(log pi * R) or KL
  std::size_t pairs = 0;
  bool applied = false;
};

/// REINFORCE ascent direction: mean over every action in the batch of
/// grad log pi(d|q) * R(q,d), recomputed under `params` from the stored
/// candidate slots (`index` supplies their features). Throws NumericError
/// naming the episode on a non-finite gradient.
Gradient reinforce_direction(std::span<const Episode> episodes, const DenseIndex& index,
                             const EncoderParams& params, const PolicyConfig& policy,
                             ReturnBaseline& baseline, UpdateStats* stats = nullptr);

UpdateStats reinforce_update(std::span<const Episode> episodes, const DenseIndex& index,
                             EncoderParams& params, AdamState& adam, const PolicyConfig& policy,
                             double lr, ReturnBaseline& baseline, std::vector<double>& scratch);

/// KL objective for one claim under the REPLUG baseline. The rated
/// distribution is Q_j proportional to reward_j^(1/beta) and is constant.
struct ReplugObjective {
  double kl = 0.0;
  Gradient gradient;
  std::size_t support = 0;
};

ReplugObjective replug_objective(const Claim& claim, const DenseIndex& index,
                                 const EncoderParams& params, Oracle& oracle,
                                 const PolicyConfig& policy, const TrainConfig& train);

UpdateStats replug_update(const Claim& claim, const DenseIndex& index, EncoderParams& params,
                          Oracle& oracle, AdamState& adam, const PolicyConfig& policy,
                          const TrainConfig& train, double lr, std::vector<double>& scratch);

/// Everything needed to resume training bit-exactly.
struct TrainingState {
  EncoderParams params;
  AdamState adam;
  TrainConfig train;
  PolicyConfig policy;
  std::uint64_t epoch = 0;    // completed epochs
  std::uint64_t updates = 0;  // applied optimizer steps
  ReturnBaseline baseline;
  std::string rng_state;      // master stream, advanced once per epoch

  static TrainingState initial(EncoderParams params, TrainConfig train, PolicyConfig policy);
};

// Checkpoint file: the encoder block (see encoder.hpp) followed by
//   char[8] "FFRRTRN1"; u64 adam step; f64[E*F] m; f64[E*F] v;
//   u64 length + UTF-8 JSON (configs, counters, baseline, rng state).
void write_checkpoint(std::ostream& out, const TrainingState& state);
TrainingState read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const TrainingState& state);
TrainingState load_checkpoint(const std::filesystem::path& path);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;  // ckpt-epoch-N.bin + last.bin
  std::ostream* log = nullptr;                          // one JSON object per update
  std::ostream* trace = nullptr;                        // episode trace dump
  /// Stop after this many epochs in total (defaults to train.epochs).
  std::optional<std::size_t> stop_after_epoch;
};

/// Runs epochs over shuffled training claims until state.train.epochs
/// epochs are complete. Resumes from state.epoch.
void train(TrainingState& state, const ClaimSet& claims, std::shared_ptr<const Corpus> corpus,
           Oracle& oracle, const TrainOptions& options = {});

/// Fills empty question lists via oracle.decompose. Claims whose
/// decomposition fails or yields nothing are left empty (the policy then
/// falls back to the claim text).
ClaimSet ensure_questions(const ClaimSet& claims, Oracle& oracle);

}  // namespace ffrr
