// ffrr: command-line front end for indexing, decomposition, training,
// evaluation, the synthetic benchmark and the gradient self-check.
//
// Exit codes: 0 success, 1 check or runtime failure, 2 usage or input error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "ffrr/datamodel.hpp"
#include "ffrr/encoder.hpp"
#include "ffrr/errors.hpp"
#include "ffrr/eval.hpp"
#include "ffrr/gradcheck.hpp"
#include "ffrr/hashing.hpp"
#include "ffrr/index.hpp"
#include "ffrr/oracle.hpp"
#include "ffrr/policy.hpp"
#include "ffrr/prompts.hpp"
#include "ffrr/remote_oracle.hpp"
#include "ffrr/scenario.hpp"
#include "ffrr/trainer.hpp"

#ifndef FFRR_DEFAULT_PROMPTS
#define FFRR_DEFAULT_PROMPTS "data/prompts.txt"
#endif

namespace {

using namespace ffrr;

constexpr int kExitOk = 0;
constexpr int kExitCheck = 1;
constexpr int kExitInput = 2;

struct PolicyFlags {
  std::string mode = "d";
  std::size_t k = 3;
  std::optional<double> epsilon;
  double epsilon_doc = 0.1;
  double epsilon_question = 0.1;
  std::size_t pool = 20;
  double tau = 1.0;
  std::size_t max_samples = 0;  // 0 means 2K
  double lambda = 1.0;

  void add(CLI::App* app) {
    app->add_option("--mode", mode, "Policy: d, q or d+q")->capture_default_str();
    app->add_option("--K", k, "Documents (d) or questions (q, d+q) per claim")->capture_default_str();
    app->add_option("--epsilon", epsilon, "Sets both exploration rates");
    app->add_option("--epsilon-doc", epsilon_doc, "Document-level exploration rate")->capture_default_str();
    app->add_option("--epsilon-question", epsilon_question, "Question-level exploration rate")
        ->capture_default_str();
    app->add_option("--pool", pool, "Candidate pool size n")->capture_default_str();
    app->add_option("--tau", tau, "Retrieval softmax temperature")->capture_default_str();
    app->add_option("--max-samples", max_samples, "Document samples per episode (0 = 2K)")
        ->capture_default_str();
    app->add_option("--lambda", lambda, "Final-reward weight")->capture_default_str();
  }

  PolicyConfig resolve() const {
    PolicyConfig p;
    p.mode = parse_policy_mode(mode);
    p.top_k = k;
    p.epsilon_doc = epsilon.value_or(epsilon_doc);
    p.epsilon_question = epsilon.value_or(epsilon_question);
    p.pool_size = pool;
    p.temperature = tau;
    p.max_samples = max_samples ? max_samples : std::min(2 * k, pool);
    p.final_reward_weight = lambda;
    p.validate();
    return p;
  }
};

struct TrainFlags {
  double lr = 1e-5;
  std::size_t batch = 4;
  double warmup = 0.1;
  std::size_t epochs = 1;
  std::size_t refresh = 50;
  bool baseline = false;
  std::uint64_t seed = 0;
  std::string algorithm = "ffrr";
  double replug_beta = 1.0;
  std::string kl_direction = "forward";

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app->add_option("--batch", batch, "Claims per update")->capture_default_str();
    app->add_option("--warmup", warmup, "Warmup fraction of total updates")->capture_default_str();
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--refresh", refresh, "Re-embed the index every R updates")->capture_default_str();
    app->add_flag("--baseline", baseline, "Subtract an EMA return baseline");
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--algorithm", algorithm, "ffrr or replug")->capture_default_str();
    app->add_option("--replug-beta", replug_beta, "REPLUG rated-distribution temperature")
        ->capture_default_str();
    app->add_option("--kl-direction", kl_direction, "forward: KL(P_R||Q), reverse: KL(Q||P_R)")
        ->capture_default_str();
  }

  TrainConfig resolve() const {
    TrainConfig t;
    t.learning_rate = lr;
    t.batch_size = batch;
    t.warmup_ratio = warmup;
    t.epochs = epochs;
    t.refresh_period = refresh;
    t.baseline = baseline;
    t.seed = seed;
    t.algorithm = parse_algorithm(algorithm);
    t.replug_beta = replug_beta;
    t.kl_direction = parse_kl_direction(kl_direction);
    t.validate();
    return t;
  }
};

struct OracleFlags {
  std::string kind = "simulated";
  std::string evidence;
  double sharpness = 4.0;
  std::string distractor = "uniform";
  std::string endpoint = RemoteOracleSpec{}.endpoint;
  std::string model = RemoteOracleSpec{}.model;
  std::string token_env = RemoteOracleSpec{}.token_env;
  std::vector<std::string> label_tokens;
  std::string prompts = FFRR_DEFAULT_PROMPTS;
  std::string cache_dir;
  bool no_cache = false;
  std::size_t max_in_flight = 4;
  std::size_t timeout_ms = 30000;
  std::size_t retries = 3;
  std::size_t shots = 2;

  void add(CLI::App* app) {
    app->add_option("--oracle", kind, "simulated or remote")->capture_default_str();
    app->add_option("--evidence", evidence, "Hidden-evidence file (simulated oracle)");
    app->add_option("--sharpness", sharpness, "Simulated oracle sharpness")->capture_default_str();
    app->add_option("--distractor", distractor, "Simulated non-gold rule: uniform or next")
        ->capture_default_str();
    app->add_option("--endpoint", endpoint, "Completions endpoint URL")->capture_default_str();
    app->add_option("--model", model, "Remote model name")->capture_default_str();
    app->add_option("--token-env", token_env, "Environment variable holding the API token")
        ->capture_default_str();
    app->add_option("--label-tokens", label_tokens, "Scoring token per label, in label order");
    app->add_option("--prompts", prompts, "Demonstrations file")->capture_default_str();
    app->add_option("--cache-dir", cache_dir, "On-disk response cache directory");
    app->add_flag("--no-cache", no_cache, "Disable response caching");
    app->add_option("--max-in-flight", max_in_flight, "Concurrent remote requests")->capture_default_str();
    app->add_option("--timeout-ms", timeout_ms, "Per-request timeout")->capture_default_str();
    app->add_option("--retries", retries, "Retries after a failed request")->capture_default_str();
    app->add_option("--shots", shots, "Prediction demonstrations in the prompt")->capture_default_str();
  }

  std::unique_ptr<Oracle> make(const ClaimSet& claims, const Corpus& corpus) const {
    if (kind == "simulated") {
      if (evidence.empty()) throw InputError("--evidence is required with --oracle simulated");
      std::ifstream in(evidence);
      if (!in) throw InputError("cannot open evidence file '" + evidence + "'");
      auto all = read_evidence(in, evidence);
      SimulatedOracleSpec spec;
      spec.sharpness = sharpness;
      if (distractor == "uniform") spec.distractor = DistractorRule::Uniform;
      else if (distractor == "next") spec.distractor = DistractorRule::Next;
      else throw InputError("unknown distractor rule '" + distractor + "'");
      for (const auto& c : claims.claims()) {
        auto it = all.find(c.id);
        if (it == all.end()) continue;
        spec.hidden_evidence.emplace(c.id, it->second);
        spec.gold.emplace(c.id, c.gold);
      }
      return std::make_unique<SimulatedOracle>(claims.labels(), std::move(spec), corpus);
    }
    if (kind == "remote") {
      RemoteOracleSpec spec;
      spec.endpoint = endpoint;
      spec.model = model;
      spec.token_env = token_env;
      spec.label_tokens = label_tokens;
      spec.cache = !no_cache;
      if (!cache_dir.empty()) spec.cache_dir = cache_dir;
      spec.max_in_flight = max_in_flight;
      spec.timeout = std::chrono::milliseconds(timeout_ms);
      spec.max_retries = retries;
      spec.shots = shots;
      return std::make_unique<RemoteOracle>(claims.labels(), std::move(spec), load_prompts(prompts));
    }
    throw InputError("unknown oracle '" + kind + "' (expected simulated or remote)");
  }
};

struct EncoderFlags {
  std::string checkpoint;
  std::uint32_t embedding_dim = kDefaultEmbeddingDim;
  std::uint32_t feature_dim = kDefaultFeatureDim;
  std::uint64_t init_seed = 0;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Encoder or training checkpoint");
    app->add_option("--embedding-dim", embedding_dim, "E for a fresh encoder")->capture_default_str();
    app->add_option("--feature-dim", feature_dim, "F for a fresh encoder")->capture_default_str();
    app->add_option("--init-seed", init_seed, "Seed for a fresh encoder")->capture_default_str();
  }

  EncoderParams resolve() const {
    if (!checkpoint.empty()) return load_encoder(checkpoint).params;
    return EncoderParams::random(embedding_dim, feature_dim, init_seed);
  }
};

void echo_config(const CLI::App& sub) {
  std::cout << "# " << sub.get_name() << " configuration\n" << sub.config_to_str(true, false) << std::flush;
}

Corpus read_corpus_flags(const std::string& corpus, const std::string& exclusions) {
  return load_corpus(corpus, exclusions.empty() ? std::nullopt
                                                : std::optional<std::filesystem::path>(exclusions));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforcement retrieval for claim verification with black-box oracle feedback"};
  app.set_config("--config", "", "TOML or INI file; [subcommand] sections hold subcommand options");
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

  // index
  auto* index_cmd = app.add_subcommand("index", "Embed a corpus and write a dense index");
  std::string corpus_path;
  std::string exclusions_path;
  std::string out_path;
  EncoderFlags index_enc;
  index_cmd->add_option("--corpus", corpus_path, "Documents JSONL")->required();
  index_cmd->add_option("--exclusions", exclusions_path, "Leak-exclusion id list");
  index_cmd->add_option("--out", out_path, "Index file to write")->required();
  index_enc.add(index_cmd);

  // decompose
  auto* decompose_cmd = app.add_subcommand("decompose", "Fill claim questions via the oracle");
  std::string claims_path;
  OracleFlags decompose_oracle;
  decompose_cmd->add_option("--claims", claims_path, "Claims JSONL")->required();
  decompose_cmd->add_option("--corpus", corpus_path, "Documents JSONL (simulated oracle)");
  decompose_cmd->add_option("--out", out_path, "Claims JSONL to write")->required();
  decompose_oracle.add(decompose_cmd);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the retriever");
  PolicyFlags train_policy;
  TrainFlags train_flags;
  OracleFlags train_oracle;
  EncoderFlags train_enc;
  std::string out_dir;
  std::string resume;
  std::string log_path;
  std::string trace_path;
  train_cmd->add_option("--claims", claims_path, "Training claims JSONL")->required();
  train_cmd->add_option("--corpus", corpus_path, "Documents JSONL")->required();
  train_cmd->add_option("--exclusions", exclusions_path, "Leak-exclusion id list");
  train_cmd->add_option("--out", out_dir, "Checkpoint directory")->required();
  train_cmd->add_option("--resume", resume, "Training checkpoint to resume from");
  std::size_t stop_after = 0;
  train_cmd->add_option("--stop-after-epoch", stop_after, "Stop once this many epochs are done (0 = run all)");
  train_cmd->add_option("--log", log_path, "Per-update JSONL log");
  train_cmd->add_option("--trace", trace_path, "Episode trace JSONL");
  train_policy.add(train_cmd);
  train_flags.add(train_cmd);
  train_oracle.add(train_cmd);
  train_enc.add(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Predict and score a claim split");
  PolicyFlags eval_policy;
  OracleFlags eval_oracle;
  EncoderFlags eval_enc;
  std::string report_path;
  eval_cmd->add_option("--claims", claims_path, "Claims JSONL")->required();
  eval_cmd->add_option("--corpus", corpus_path, "Documents JSONL")->required();
  eval_cmd->add_option("--exclusions", exclusions_path, "Leak-exclusion id list");
  eval_cmd->add_option("--report", report_path, "Report file to write");
  eval_policy.add(eval_cmd);
  eval_oracle.add(eval_cmd);
  eval_enc.add(eval_cmd);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Synthetic end-to-end benchmark (no network)");
  ScenarioConfig scenario;
  PolicyFlags sim_policy;
  TrainConfig sim_defaults = scenario_train_defaults();
  TrainFlags sim_train;
  sim_train.lr = sim_defaults.learning_rate;
  sim_train.epochs = sim_defaults.epochs;
  sim_train.seed = sim_defaults.seed;
  std::string write_dir;
  sim_cmd->add_option("--docs", scenario.documents, "Corpus size")->capture_default_str();
  sim_cmd->add_option("--claims", scenario.claims, "Claims per split")->capture_default_str();
  sim_cmd->add_option("--labels", scenario.labels, "Label count")->capture_default_str();
  sim_cmd->add_option("--hidden", scenario.hidden_per_claim, "Hidden evidence per claim")
      ->capture_default_str();
  sim_cmd->add_option("--topics", scenario.topics, "Topic count")->capture_default_str();
  sim_cmd->add_option("--scenario-seed", scenario.seed, "Scenario generator seed")->capture_default_str();
  sim_cmd->add_option("--embedding-dim", scenario.embedding_dim, "E")->capture_default_str();
  sim_cmd->add_option("--feature-dim", scenario.feature_dim, "F")->capture_default_str();
  sim_cmd->add_option("--write", write_dir, "Also write the generated data here");
  sim_cmd->add_option("--log", log_path, "Per-update JSONL log");
  sim_policy.add(sim_cmd);
  sim_train.add(sim_cmd);

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
  GradcheckOptions grad;
  grad_cmd->add_option("--seed", grad.seed, "Instance seed")->capture_default_str();
  grad_cmd->add_option("--instances", grad.instances, "Randomized instances")->capture_default_str();
  grad_cmd->add_option("--step", grad.step, "Central-difference step")->capture_default_str();
  grad_cmd->add_option("--tolerance", grad.tolerance, "Max normwise relative error")->capture_default_str();
  grad_cmd->add_flag("--corrupt-gradient", grad.corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_default_logger(spdlog::stderr_color_mt("ffrr"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*index_cmd) {
      echo_config(*index_cmd);
      auto corpus = std::make_shared<const Corpus>(read_corpus_flags(corpus_path, exclusions_path));
      const auto params = index_enc.resolve();
      const auto index = DenseIndex::build(corpus, params);
      index.save(out_path);
      spdlog::info("indexed {} documents into {}", index.size(), out_path);
      return kExitOk;
    }

    if (*decompose_cmd) {
      echo_config(*decompose_cmd);
      const auto claims = load_claims(claims_path);
      const Corpus corpus = corpus_path.empty() ? Corpus{} : load_corpus(corpus_path);
      auto oracle = decompose_oracle.make(claims, corpus);
      const auto filled = ensure_questions(claims, *oracle);
      save_claims(out_path, filled);
      std::size_t missing = 0;
      for (const auto& c : filled.claims()) missing += c.questions.empty();
      spdlog::info("wrote {} claims to {} ({} without questions)", filled.size(), out_path, missing);
      return kExitOk;
    }

    if (*train_cmd) {
      echo_config(*train_cmd);
      const auto policy = train_policy.resolve();
      const auto train_cfg = train_flags.resolve();
      const auto claims = load_claims(claims_path);
      auto corpus = std::make_shared<const Corpus>(read_corpus_flags(corpus_path, exclusions_path));
      auto oracle = train_oracle.make(claims, *corpus);
      TrainingState state;
      if (!resume.empty()) {
        state = load_checkpoint(resume);
        state.train.epochs = train_cfg.epochs;
      } else {
        state = TrainingState::initial(train_enc.resolve(), train_cfg, policy);
      }
      std::ofstream log_file;
      std::ofstream trace_file;
      TrainOptions options;
      options.checkpoint_dir = out_dir;
      if (stop_after > 0) options.stop_after_epoch = stop_after;
      if (!log_path.empty()) {
        log_file.open(log_path, std::ios::trunc);
        if (!log_file) throw InputError("cannot write log '" + log_path + "'");
        options.log = &log_file;
      }
      if (!trace_path.empty()) {
        trace_file.open(trace_path, std::ios::trunc);
        if (!trace_file) throw InputError("cannot write trace '" + trace_path + "'");
        options.trace = &trace_file;
      }
      if (state.train.epochs == 0) save_checkpoint(std::filesystem::path(out_dir) / "last.bin", state);
      train(state, claims, corpus, *oracle, options);
      std::cout << "epochs " << state.epoch << " updates " << state.updates << " fingerprint "
                << std::hex << fingerprint(state.params) << std::dec << '\n';
      return kExitOk;
    }

    if (*eval_cmd) {
      echo_config(*eval_cmd);
      const auto policy = eval_policy.resolve();
      const auto claims = load_claims(claims_path);
      auto corpus = std::make_shared<const Corpus>(read_corpus_flags(corpus_path, exclusions_path));
      auto oracle = eval_oracle.make(claims, *corpus);
      const auto params = eval_enc.resolve();
      const auto index = DenseIndex::build(corpus, params);
      const nlohmann::json echo = {{"mode", to_string(policy.mode)},
                                   {"K", policy.top_k},
                                   {"epsilon_doc", policy.epsilon_doc},
                                   {"epsilon_question", policy.epsilon_question},
                                   {"checkpoint", eval_enc.checkpoint},
                                   {"fingerprint", to_hex(fingerprint(params))}};
      const auto result = evaluate(claims, index, params, *oracle, policy,
                                   report_path.empty() ? std::nullopt
                                                       : std::optional<std::filesystem::path>(report_path),
                                   &echo);
      const auto& r = result.report;
      std::printf("macro P %.4f R %.4f F1 %.4f (mean class F1 %.4f) over %zu claims, %zu unevaluated\n",
                  r.macro_precision, r.macro_recall, r.macro_f1, r.mean_class_f1, r.claim_count,
                  r.unevaluated.size());
      return kExitOk;
    }

    if (*sim_cmd) {
      echo_config(*sim_cmd);
      const auto policy = sim_policy.resolve();
      const auto train_cfg = sim_train.resolve();
      if (!write_dir.empty()) write_scenario(generate_scenario(scenario), write_dir);
      std::ofstream log_file;
      if (!log_path.empty()) {
        log_file.open(log_path, std::ios::trunc);
        if (!log_file) throw InputError("cannot write log '" + log_path + "'");
      }
      const auto r = run_scenario(scenario, policy, train_cfg, log_path.empty() ? nullptr : &log_file);
      std::printf("before: recall@%zu %.4f macro-F1 %.4f\n", policy.top_k, r.before.recall, r.before.macro_f1);
      std::printf("after:  recall@%zu %.4f macro-F1 %.4f\n", policy.top_k, r.after.recall, r.after.macro_f1);
      std::printf("held-out before: recall@%zu %.4f macro-F1 %.4f\n", policy.top_k, r.held_out_before.recall,
                  r.held_out_before.macro_f1);
      std::printf("held-out after:  recall@%zu %.4f macro-F1 %.4f\n", policy.top_k, r.held_out_after.recall,
                  r.held_out_after.macro_f1);
      std::printf("updates %llu, %.1f s\n", static_cast<unsigned long long>(r.updates), r.seconds);
      const bool finite = std::isfinite(r.after.recall) && std::isfinite(r.after.macro_f1);
      return finite ? kExitOk : kExitCheck;
    }

    if (*grad_cmd) {
      echo_config(*grad_cmd);
      const auto r = run_gradcheck(grad);
      std::printf("log-policy max relative error %.3e (seed %llu)\n", r.max_log_policy_error,
                  static_cast<unsigned long long>(r.worst_log_policy_seed));
      std::printf("KL max relative error %.3e (seed %llu)\n", r.max_kl_error,
                  static_cast<unsigned long long>(r.worst_kl_seed));
      std::printf("%zu instances: %s\n", r.instances, r.passed ? "pass" : "FAIL");
      return r.passed ? kExitOk : kExitCheck;
    }
  } catch (const InputError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitCheck;
  }
  return kExitInput;
}
