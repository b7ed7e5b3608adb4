#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "ffrr/remote_oracle.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "ffrr/errors.hpp"
#include "ffrr/hashing.hpp"
#include "httplib.h"
#include "json.hpp"
#include "softmax.hpp"

namespace ffrr {

using nlohmann::json;

namespace {

std::string normalize_token(std::string_view token) {
  const auto b = token.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = token.find_last_not_of(" \t\r\n");
  std::string out(token.substr(b, e - b + 1));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string leading_word(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c))) {
      if (out.empty()) continue;
      break;
    }
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

std::vector<std::string> resolve_label_tokens(const LabelSet& labels,
                                              const std::vector<std::string>& declared) {
  if (!declared.empty() && declared.size() != labels.size()) {
    throw InputError("expected " + std::to_string(labels.size()) + " label tokens, got " +
                     std::to_string(declared.size()));
  }
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::string token = declared.empty() ? leading_word(labels.name(i)) : normalize_token(declared[i]);
    if (token.empty()) throw InputError("label '" + labels.name(i) + "' has an empty scoring token");
    if (!seen.insert(token).second) {
      throw InputError("labels share the scoring token '" + token + "'; declare label tokens explicitly");
    }
    out.push_back(std::move(token));
  }
  return out;
}

RemoteOracle::RemoteOracle(LabelSet labels, RemoteOracleSpec spec, PromptTemplates templates)
    : labels_(std::move(labels)), spec_(std::move(spec)), templates_(std::move(templates)) {
  label_tokens_ = resolve_label_tokens(labels_, spec_.label_tokens);
  if (spec_.max_in_flight == 0) throw InputError("max_in_flight must be positive");
  if (spec_.shots > templates_.prediction.size()) {
    throw InputError("prompts file has fewer prediction demonstrations than shots");
  }
  const auto scheme_end = spec_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw InputError("endpoint must include a scheme: " + spec_.endpoint);
  const auto path_start = spec_.endpoint.find('/', scheme_end + 3);
  scheme_host_ = spec_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : spec_.endpoint.substr(path_start);
  if (spec_.cache && spec_.cache_dir) std::filesystem::create_directories(*spec_.cache_dir);
}

std::string RemoteOracle::prediction_prompt(const Claim& claim, DocumentRefs docs) const {
  std::vector<std::string_view> texts;
  texts.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    texts.push_back(docs[i]->text);
    std::string prompt = render_prediction_prompt(templates_, spec_.shots, labels_, claim.text, texts);
    if (prompt.size() > spec_.max_prompt_chars) {
      throw OracleError("prompt exceeds " + std::to_string(spec_.max_prompt_chars) +
                        " characters at document '" + docs[i]->id + "'");
    }
    if (i + 1 == docs.size()) return prompt;
  }
  throw InputError("oracle call with no documents");
}

LabelScoreDistribution RemoteOracle::parse_label_scores(const std::string& body) const {
  std::vector<double> logits(label_tokens_.size(), std::log(spec_.missing_label_floor));
  std::vector<bool> found(label_tokens_.size(), false);
  try {
    const auto doc = json::parse(body);
    const auto& top = doc.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);
    for (const auto& [token, logprob] : top.items()) {
      const std::string norm = normalize_token(token);
      for (std::size_t i = 0; i < label_tokens_.size(); ++i) {
        if (norm != label_tokens_[i]) continue;
        const double lp = logprob.get<double>();
        if (!found[i] || lp > logits[i]) logits[i] = lp;
        found[i] = true;
      }
    }
  } catch (const json::exception& e) {
    throw OracleError(std::string("malformed completions response: ") + e.what());
  }
  LabelScoreDistribution out;
  out.scores = detail::softmax(logits, 1.0);
  out.provenance = Provenance::Remote;
  check_distribution(out);
  return out;
}

LabelScoreDistribution RemoteOracle::score(const Claim& claim, DocumentRefs docs) {
  if (docs.empty()) throw InputError("oracle call with no documents");
  return parse_label_scores(complete(prediction_prompt(claim, docs), 1));
}

std::vector<std::string> RemoteOracle::decompose(const Claim& claim) {
  const std::string body = complete(render_decomposition_prompt(templates_, claim.text),
                                    spec_.decompose_max_tokens);
  std::string text;
  try {
    text = json::parse(body).at("choices").at(0).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw OracleError(std::string("malformed completions response: ") + e.what());
  }
  auto questions = parse_questions(text);
  if (questions.empty()) throw OracleError("no questions parsed for claim '" + claim.id + "'");
  return questions;
}

std::string RemoteOracle::complete(const std::string& prompt, std::size_t max_tokens) {
  const json payload = {{"model", spec_.model},
                        {"prompt", prompt},
                        {"temperature", 0},
                        {"max_tokens", max_tokens},
                        {"logprobs", spec_.top_logprobs}};
  if (!spec_.cache) return post_with_retries(payload.dump());

  const std::string key = sha256_hex(spec_.model + '\n' + std::to_string(max_tokens) + '\n' + prompt);
  std::promise<std::string> promise;
  std::shared_future<std::string> future;
  bool owner = false;
  {
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      ++cache_hits_;
      future = it->second;
    } else {
      owner = true;
      future = promise.get_future().share();
      cache_.emplace(key, future);
    }
  }
  if (!owner) return future.get();

  try {
    std::string response;
    if (auto cached = read_disk_cache(key, prompt)) {
      ++cache_hits_;
      response = std::move(*cached);
    } else {
      response = post_with_retries(payload.dump());
      write_disk_cache(key, prompt, response);
    }
    promise.set_value(response);
    return response;
  } catch (...) {
    {
      std::lock_guard lock(cache_mutex_);
      cache_.erase(key);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::string RemoteOracle::post_with_retries(const std::string& payload) {
  const char* token = std::getenv(spec_.token_env.c_str());
  if (!token || !*token) throw OracleError("environment variable " + spec_.token_env + " is not set");

  {
    std::unique_lock lock(slots_mutex_);
    slots_cv_.wait(lock, [&] { return in_flight_ < spec_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    RemoteOracle* self;
    ~Release() {
      {
        std::lock_guard lock(self->slots_mutex_);
        --self->in_flight_;
      }
      self->slots_cv_.notify_one();
    }
  } release{this};

  httplib::Client client(scheme_host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(spec_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(spec_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  client.set_bearer_token_auth(token);

  auto delay = spec_.backoff_initial;
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= spec_.max_retries; ++attempt) {
    if (attempt) {
      spdlog::warn("oracle request failed ({}); retry {} of {}", last_error, attempt, spec_.max_retries);
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * spec_.backoff_multiplier));
    }
    ++network_requests_;
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    last_error = "HTTP " + std::to_string(res->status);
    if (!retryable(res->status)) break;
  }
  throw OracleError("oracle request to " + spec_.endpoint + " failed: " + last_error);
}

std::optional<std::string> RemoteOracle::read_disk_cache(const std::string& key,
                                                         const std::string& prompt) const {
  if (!spec_.cache_dir) return std::nullopt;
  const auto path = *spec_.cache_dir / (key + ".json");
  std::lock_guard lock(disk_mutex_);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    const auto entry = json::parse(in);
    if (entry.at("model") != spec_.model || entry.at("prompt") != prompt) return std::nullopt;
    return entry.at("response").get<std::string>();
  } catch (const json::exception&) {
    spdlog::warn("ignoring unreadable cache entry {}", path.string());
    return std::nullopt;
  }
}

void RemoteOracle::write_disk_cache(const std::string& key, const std::string& prompt,
                                    const std::string& response) const {
  if (!spec_.cache_dir) return;
  const auto path = *spec_.cache_dir / (key + ".json");
  const auto tmp = *spec_.cache_dir / (key + ".tmp");
  const json entry = {{"model", spec_.model}, {"prompt", prompt}, {"response", response}};
  std::lock_guard lock(disk_mutex_);
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw OracleError("cannot write cache entry " + tmp.string());
    out << entry.dump();
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ffrr
