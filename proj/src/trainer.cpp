#include "ffrr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <ostream>

#include <spdlog/spdlog.h>

#include "ffrr/binary_io.hpp"
#include "ffrr/errors.hpp"
#include "ffrr/kernels.hpp"
#include "ffrr/rng.hpp"
#include "json.hpp"

namespace ffrr {

using nlohmann::json;

std::string_view to_string(Algorithm algorithm) {
  return algorithm == Algorithm::Ffrr ? "ffrr" : "replug";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "ffrr") return Algorithm::Ffrr;
  if (name == "replug") return Algorithm::Replug;
  throw InputError("unknown algorithm '" + std::string(name) + "' (expected ffrr or replug)");
}

std::string_view to_string(KlDirection direction) {
  return direction == KlDirection::RetrievalToRated ? "forward" : "reverse";
}

KlDirection parse_kl_direction(std::string_view name) {
  if (name == "forward") return KlDirection::RetrievalToRated;
  if (name == "reverse") return KlDirection::RatedToRetrieval;
  throw InputError("unknown KL direction '" + std::string(name) + "' (expected forward or reverse)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InputError("learning rate must be positive");
  if (batch_size == 0) throw InputError("batch size must be at least 1");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw InputError("warmup ratio must lie in [0,1]");
  if (refresh_period == 0) throw InputError("index refresh period must be at least 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) throw InputError("baseline decay must lie in [0,1)");
  if (!(replug_beta > 0.0) || !std::isfinite(replug_beta)) throw InputError("REPLUG beta must be positive");
}

AdamState AdamState::zeros(const EncoderParams& params) {
  AdamState s;
  s.m.assign(params.data().size(), 0.0);
  s.v.assign(params.data().size(), 0.0);
  return s;
}

void adam_apply(EncoderParams& params, AdamState& adam, const Gradient& loss_grad, double lr,
                std::vector<double>& scratch) {
  const std::size_t n = params.data().size();
  if (adam.m.size() != n || adam.v.size() != n || scratch.size() != n) {
    throw DimensionError("optimizer state does not match encoder shape");
  }
  if (loss_grad.rows() != params.rows() || loss_grad.cols() != params.cols()) {
    throw DimensionError("gradient does not match encoder shape");
  }
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const kernels::AdamCoefficients c{lr,
                                    AdamState::kBeta1,
                                    AdamState::kBeta2,
                                    AdamState::kEpsilon,
                                    1.0 - std::pow(AdamState::kBeta1, t),
                                    1.0 - std::pow(AdamState::kBeta2, t)};
  loss_grad.scatter_into(scratch);
  kernels::adam_step_parallel(params.data(), adam.m, adam.v, scratch, c);
  loss_grad.clear_from(scratch);
}

double warmup_lr(double base_lr, double warmup_ratio, std::uint64_t update, std::uint64_t total) {
  const double warm = warmup_ratio * static_cast<double>(total);
  if (!(warm > 0.0) || static_cast<double>(update) >= warm) return base_lr;
  return base_lr * static_cast<double>(update) / warm;
}

double episode_return(const Episode& episode, std::size_t action, double lambda) {
  const auto& a = episode.actions.at(action);
  return a.reward + (episode.in_final(a.slot()) ? lambda * episode.final_reward : 0.0);
}

void ReturnBaseline::observe(double ret) {
  if (!enabled) return;
  if (!initialized) {
    value = ret;
    initialized = true;
  } else {
    value = decay * value + (1.0 - decay) * ret;
  }
}

Gradient reinforce_direction(std::span<const Episode> episodes, const DenseIndex& index,
                             const EncoderParams& params, const PolicyConfig& policy,
                             ReturnBaseline& baseline, UpdateStats* stats) {
  Gradient direction(params.rows(), params.cols());
  std::size_t pairs = 0;
  for (const auto& e : episodes) pairs += e.actions.size();
  UpdateStats local;
  local.pairs = pairs;
  if (pairs == 0) {
    if (stats) *stats = local;
    return direction;
  }

  const double inv = 1.0 / static_cast<double>(pairs);
  double return_sum = 0.0;
  double loss = 0.0;
  double kappa_sum = 0.0;
  std::vector<const FeatureVector*> docs;
  for (const auto& e : episodes) {
    kappa_sum += static_cast<double>(e.kappa);
    for (std::size_t i = 0; i < e.actions.size(); ++i) {
      const auto& a = e.actions[i];
      docs.clear();
      for (auto slot : a.candidates) docs.push_back(&index.features(slot));
      const double ret = episode_return(e, i, policy.final_reward_weight);
      const double weight = baseline.apply(ret);
      return_sum += ret;
      if (weight == 0.0) continue;
      const Gradient g = log_policy_grad(params, a.query_features, docs, a.chosen, policy.temperature);
      if (!g.all_finite()) {
        throw NumericError("non-finite policy gradient in episode for claim '" + e.claim_id + "'");
      }
      direction.add(g, weight * inv);
      loss -= log_policy(params, a.query_features, docs, a.chosen, policy.temperature) * weight * inv;
    }
  }
  local.mean_return = return_sum * inv;
  local.mean_kappa = kappa_sum / static_cast<double>(episodes.size());
  local.loss = loss;
  if (stats) *stats = local;
  baseline.observe(local.mean_return);
  return direction;
}

UpdateStats reinforce_update(std::span<const Episode> episodes, const DenseIndex& index,
                             EncoderParams& params, AdamState& adam, const PolicyConfig& policy,
                             double lr, ReturnBaseline& baseline, std::vector<double>& scratch) {
  if (episodes.empty()) throw InputError("reinforce update on an empty batch");
  UpdateStats stats;
  Gradient direction = reinforce_direction(episodes, index, params, policy, baseline, &stats);
  stats.lr = lr;
  if (stats.pairs == 0) return stats;
  direction.scale(-1.0);
  adam_apply(params, adam, direction, lr, scratch);
  stats.applied = true;
  return stats;
}

namespace {

// Oracle rewards for single documents, memoized within one claim.
class RewardMemo {
 public:
  RewardMemo(Oracle& oracle, const Claim& claim, const DenseIndex& index)
      : oracle_(oracle), claim_(claim), index_(index) {}

  double operator()(std::uint32_t slot) {
    auto it = memo_.find(slot);
    if (it != memo_.end()) return it->second;
    const Document* doc = &index_.document(slot);
    const double r = reward(oracle_, claim_, std::span<const Document* const>(&doc, 1));
    memo_.emplace(slot, r);
    return r;
  }

 private:
  Oracle& oracle_;
  const Claim& claim_;
  const DenseIndex& index_;
  std::map<std::uint32_t, double> memo_;
};

std::vector<double> rated_distribution(const std::vector<double>& rewards, double beta) {
  std::vector<double> q(rewards.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    q[i] = std::pow(std::max(rewards[i], 1e-12), 1.0 / beta);
    total += q[i];
  }
  for (auto& x : q) x /= total;
  return q;
}

void accumulate_kl(ReplugObjective& obj, const EncoderParams& params,
                   const std::vector<ScoredPair>& support, const std::vector<double>& rewards,
                   const PolicyConfig& policy, const TrainConfig& train) {
  if (support.size() < 2) return;
  auto kl = kl_divergence_grad(params, support, rated_distribution(rewards, train.replug_beta),
                               policy.temperature, train.kl_direction);
  obj.kl += kl.value;
  obj.gradient.add(kl.gradient);
  obj.support += support.size();
}

}  // namespace

ReplugObjective replug_objective(const Claim& claim, const DenseIndex& index,
                                 const EncoderParams& params, Oracle& oracle,
                                 const PolicyConfig& policy, const TrainConfig& train) {
  ReplugObjective obj;
  obj.gradient = Gradient(params.rows(), params.cols());
  RewardMemo memo(oracle, claim, index);

  auto top_docs = [&](const FeatureVector& q, const std::string& text, std::size_t k) {
    const auto pool = candidate_pool(index, params, q, text, policy.pool_size);
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < std::min(k, pool.size()); ++i) out.push_back(pool.entries[i].slot);
    return out;
  };

  if (policy.mode == PolicyMode::Document) {
    const FeatureVector q = featurize(claim.text, params.cols());
    std::vector<ScoredPair> support;
    std::vector<double> rewards;
    for (auto slot : top_docs(q, claim.text, policy.top_k)) {
      support.push_back({&q, &index.features(slot)});
      rewards.push_back(memo(slot));
    }
    accumulate_kl(obj, params, support, rewards, policy, train);
    return obj;
  }

  auto questions = episode_questions(claim);
  if (questions.size() > policy.top_k) questions.resize(policy.top_k);
  std::vector<FeatureVector> qfeatures;
  qfeatures.reserve(questions.size());
  for (const auto& text : questions) qfeatures.push_back(featurize(text, params.cols()));

  std::vector<ScoredPair> top_support;
  std::vector<double> top_rewards;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const auto docs = top_docs(qfeatures[i], questions[i],
                               policy.mode == PolicyMode::Hybrid ? policy.top_k : 1);
    top_support.push_back({&qfeatures[i], &index.features(docs.front())});
    top_rewards.push_back(memo(docs.front()));
    if (policy.mode == PolicyMode::Hybrid) {
      std::vector<ScoredPair> support;
      std::vector<double> rewards;
      for (auto slot : docs) {
        support.push_back({&qfeatures[i], &index.features(slot)});
        rewards.push_back(memo(slot));
      }
      accumulate_kl(obj, params, support, rewards, policy, train);
    }
  }
  accumulate_kl(obj, params, top_support, top_rewards, policy, train);
  return obj;
}

UpdateStats replug_update(const Claim& claim, const DenseIndex& index, EncoderParams& params,
                          Oracle& oracle, AdamState& adam, const PolicyConfig& policy,
                          const TrainConfig& train, double lr, std::vector<double>& scratch) {
  const auto obj = replug_objective(claim, index, params, oracle, policy, train);
  UpdateStats stats;
  stats.lr = lr;
  stats.loss = obj.kl;
  stats.pairs = obj.support;
  if (obj.support == 0) return stats;
  if (!obj.gradient.all_finite()) {
    throw NumericError("non-finite KL gradient for claim '" + claim.id + "'");
  }
  adam_apply(params, adam, obj.gradient, lr, scratch);
  stats.applied = true;
  return stats;
}

TrainingState TrainingState::initial(EncoderParams params, TrainConfig train, PolicyConfig policy) {
  TrainingState s;
  s.adam = AdamState::zeros(params);
  s.params = std::move(params);
  s.baseline.enabled = train.baseline;
  s.baseline.decay = train.baseline_decay;
  s.rng_state = Rng(derive_seed(train.seed, "shuffle")).serialize();
  s.train = std::move(train);
  s.policy = std::move(policy);
  return s;
}

namespace {

constexpr std::string_view kTrainMagic = "FFRRTRN1";

json config_json(const TrainingState& s) {
  return {
      {"train",
       {{"learning_rate", s.train.learning_rate},
        {"batch_size", s.train.batch_size},
        {"warmup_ratio", s.train.warmup_ratio},
        {"epochs", s.train.epochs},
        {"refresh_period", s.train.refresh_period},
        {"baseline", s.train.baseline},
        {"baseline_decay", s.train.baseline_decay},
        {"seed", s.train.seed},
        {"algorithm", to_string(s.train.algorithm)},
        {"replug_beta", s.train.replug_beta},
        {"kl_direction", to_string(s.train.kl_direction)}}},
      {"policy",
       {{"top_k", s.policy.top_k},
        {"epsilon_doc", s.policy.epsilon_doc},
        {"epsilon_question", s.policy.epsilon_question},
        {"pool_size", s.policy.pool_size},
        {"temperature", s.policy.temperature},
        {"max_samples", s.policy.max_samples},
        {"final_reward_weight", s.policy.final_reward_weight},
        {"mode", to_string(s.policy.mode)}}},
      {"epoch", s.epoch},
      {"updates", s.updates},
      {"baseline",
       {{"enabled", s.baseline.enabled},
        {"decay", s.baseline.decay},
        {"value", s.baseline.value},
        {"initialized", s.baseline.initialized}}},
      {"rng_state", s.rng_state},
  };
}

}  // namespace

void write_checkpoint(std::ostream& out, const TrainingState& state) {
  write_encoder(out, {state.params, state.policy.temperature, state.updates});
  binary::write_magic(out, kTrainMagic);
  binary::write<std::uint64_t>(out, state.adam.step);
  binary::write_span<double>(out, state.adam.m);
  binary::write_span<double>(out, state.adam.v);
  binary::write_string(out, config_json(state).dump());
  if (!out) throw Error("failed to write checkpoint");
}

TrainingState read_checkpoint(std::istream& in) {
  TrainingState s;
  auto enc = read_encoder(in);
  s.params = std::move(enc.params);
  binary::expect_magic(in, kTrainMagic);
  s.adam = AdamState::zeros(s.params);
  s.adam.step = binary::read<std::uint64_t>(in);
  binary::read_span<double>(in, s.adam.m);
  binary::read_span<double>(in, s.adam.v);
  const std::string text = binary::read_string(in);
  try {
    const auto j = json::parse(text);
    const auto& t = j.at("train");
    s.train.learning_rate = t.at("learning_rate");
    s.train.batch_size = t.at("batch_size");
    s.train.warmup_ratio = t.at("warmup_ratio");
    s.train.epochs = t.at("epochs");
    s.train.refresh_period = t.at("refresh_period");
    s.train.baseline = t.at("baseline");
    s.train.baseline_decay = t.at("baseline_decay");
    s.train.seed = t.at("seed");
    s.train.algorithm = parse_algorithm(t.at("algorithm").get<std::string>());
    s.train.replug_beta = t.at("replug_beta");
    s.train.kl_direction = parse_kl_direction(t.at("kl_direction").get<std::string>());
    const auto& p = j.at("policy");
    s.policy.top_k = p.at("top_k");
    s.policy.epsilon_doc = p.at("epsilon_doc");
    s.policy.epsilon_question = p.at("epsilon_question");
    s.policy.pool_size = p.at("pool_size");
    s.policy.temperature = p.at("temperature");
    s.policy.max_samples = p.at("max_samples");
    s.policy.final_reward_weight = p.at("final_reward_weight");
    s.policy.mode = parse_policy_mode(p.at("mode").get<std::string>());
    s.epoch = j.at("epoch");
    s.updates = j.at("updates");
    const auto& b = j.at("baseline");
    s.baseline.enabled = b.at("enabled");
    s.baseline.decay = b.at("decay");
    s.baseline.value = b.at("value");
    s.baseline.initialized = b.at("initialized");
    s.rng_state = j.at("rng_state");
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint '" + tmp.string() + "'");
    write_checkpoint(out, state);
  }
  std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

namespace {

std::uint64_t updates_per_epoch(const TrainingState& s, std::size_t claims) {
  if (s.train.algorithm == Algorithm::Replug) return claims;
  return (claims + s.train.batch_size - 1) / s.train.batch_size;
}

void log_update(std::ostream* log, const TrainingState& s, const UpdateStats& stats) {
  if (!log) return;
  const json rec = {{"update", s.updates},   {"epoch", s.epoch},
                    {"lr", stats.lr},        {"mean_return", stats.mean_return},
                    {"mean_kappa", stats.mean_kappa}, {"loss", stats.loss},
                    {"pairs", stats.pairs}, {"algorithm", to_string(s.train.algorithm)}};
  *log << rec.dump() << '\n';
}

void save_interrupted(const TrainOptions& options, const TrainingState& state) {
  if (!options.checkpoint_dir) return;
  const auto path = *options.checkpoint_dir / "interrupted.bin";
  save_checkpoint(path, state);
  spdlog::error("oracle unavailable; state saved to {}", path.string());
}

}  // namespace

void train(TrainingState& state, const ClaimSet& claims, std::shared_ptr<const Corpus> corpus,
           Oracle& oracle, const TrainOptions& options) {
  state.train.validate();
  state.policy.validate();
  const std::size_t stop = std::min<std::size_t>(options.stop_after_epoch.value_or(state.train.epochs),
                                                 state.train.epochs);
  if (state.epoch >= stop) return;
  if (claims.empty()) throw InputError("no training claims");
  if (claims.labels().size() != oracle.labels().size()) {
    throw InputError("oracle label set does not match the claims");
  }

  DenseIndex index = DenseIndex::build(std::move(corpus), state.params);
  std::vector<double> scratch(state.params.data().size(), 0.0);
  const std::uint64_t total = updates_per_epoch(state, claims.size()) * state.train.epochs;
  const auto& all = claims.claims();

  auto after_update = [&](const UpdateStats& stats) {
    ++state.updates;
    index.note_update();
    log_update(options.log, state, stats);
    if (state.updates % state.train.refresh_period == 0) index.refresh_in_place(state.params);
  };

  for (std::size_t epoch = state.epoch; epoch < stop; ++epoch) {
    // Refreshing at every epoch start makes a resumed run see the same
    // index as an uninterrupted one.
    if (index.staleness() > 0) index.refresh_in_place(state.params);

    Rng master(0);
    master.deserialize(state.rng_state);
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[master.index(i)]);

    for (std::size_t begin = 0; begin < order.size(); begin += state.train.batch_size) {
      const std::size_t end = std::min(order.size(), begin + state.train.batch_size);

      if (state.train.algorithm == Algorithm::Replug) {
        std::size_t failed = 0;
        for (std::size_t i = begin; i < end; ++i) {
          const Claim& claim = all[order[i]];
          const double lr = warmup_lr(state.train.learning_rate, state.train.warmup_ratio,
                                      state.updates + 1, total);
          try {
            const auto stats = replug_update(claim, index, state.params, oracle, state.adam,
                                             state.policy, state.train, lr, scratch);
            if (stats.applied) after_update(stats);
          } catch (const OracleError& e) {
            spdlog::warn("skipping claim '{}': {}", claim.id, e.what());
            ++failed;
          }
        }
        if (failed == end - begin) {
          save_interrupted(options, state);
          throw OracleError("every claim in a batch failed at the oracle");
        }
        continue;
      }

      const std::size_t n = end - begin;
      std::vector<std::optional<Episode>> rollouts(n);
      std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
      for (std::size_t i = 0; i < n; ++i) {
        const Claim& claim = all[order[begin + i]];
        Rng rng(derive_seed(state.train.seed, "episode", epoch, claim.id));
        try {
          rollouts[i] = run_episode(claim, index, state.params, oracle, state.policy, rng);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }

      std::vector<Episode> batch;
      for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) {
          try {
            std::rethrow_exception(errors[i]);
          } catch (const OracleError& e) {
            spdlog::warn("discarding episode for claim '{}': {}", all[order[begin + i]].id, e.what());
          }
          continue;
        }
        batch.push_back(std::move(*rollouts[i]));
      }
      if (batch.empty()) {
        save_interrupted(options, state);
        throw OracleError("every episode in a batch failed at the oracle");
      }
      if (options.trace) {
        for (const auto& e : batch) write_episode_trace(*options.trace, e, index);
      }
      const double lr =
          warmup_lr(state.train.learning_rate, state.train.warmup_ratio, state.updates + 1, total);
      const auto stats = reinforce_update(batch, index, state.params, state.adam, state.policy, lr,
                                          state.baseline, scratch);
      if (stats.applied) after_update(stats);
    }

    state.epoch = epoch + 1;
    state.rng_state = master.serialize();
    spdlog::info("epoch {} done, {} updates", state.epoch, state.updates);
    if (options.checkpoint_dir) {
      save_checkpoint(*options.checkpoint_dir / ("ckpt-epoch-" + std::to_string(state.epoch) + ".bin"), state);
      save_checkpoint(*options.checkpoint_dir / "last.bin", state);
    }
  }
}

ClaimSet ensure_questions(const ClaimSet& claims, Oracle& oracle) {
  ClaimSet out = claims;
  const auto& list = claims.claims();
  std::vector<std::optional<std::vector<std::string>>> filled(list.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i].questions.empty()) continue;
    try {
      filled[i] = oracle.decompose(list[i]);
    } catch (const Error& e) {
      spdlog::warn("decomposition failed for claim '{}': {}", list[i].id, e.what());
    }
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (filled[i] && !filled[i]->empty()) out.set_questions(i, std::move(*filled[i]));
  }
  return out;
}

}  // namespace ffrr
