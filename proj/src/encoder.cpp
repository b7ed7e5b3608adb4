#include "ffrr/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "ffrr/binary_io.hpp"
#include "ffrr/errors.hpp"
#include "ffrr/hashing.hpp"
#include "ffrr/rng.hpp"
#include "softmax.hpp"

namespace ffrr {

namespace {

constexpr std::string_view kEncoderMagic = "FFRRENC1";

bool is_token_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || c >= 0x80;
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InputError("temperature must be positive");
}

void check_feature(const EncoderParams& params, const FeatureVector& x) {
  if (x.dim != params.cols()) {
    throw DimensionError("feature dimension " + std::to_string(x.dim) +
                         " does not match encoder input dimension " + std::to_string(params.cols()));
  }
  if (!x.entries.empty() && x.entries.back().index >= params.cols()) {
    throw DimensionError("feature index out of range");
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    if (is_token_byte(c)) {
      cur.push_back(static_cast<char>(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

FeatureVector featurize(std::string_view text, std::uint32_t dim) {
  if (dim == 0) throw InputError("feature dimension must be positive");
  FeatureVector out;
  out.dim = dim;
  const auto tokens = tokenize(text);
  std::map<std::uint32_t, double> buckets;
  auto add = [&](std::string_view key) {
    const std::uint64_t h = feature_hash(key);
    const auto idx = static_cast<std::uint32_t>(h % dim);
    buckets[idx] += (h >> 63) ? -1.0 : 1.0;
  };
  for (const auto& t : tokens) add(t);
  std::string bigram;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (tokens[i] == tokens[i + 1]) continue;
    bigram.assign(tokens[i]).append(" ").append(tokens[i + 1]);
    add(bigram);
  }
  double norm2 = 0.0;
  for (const auto& [idx, w] : buckets) {
    if (w != 0.0) {
      out.entries.push_back({idx, w});
      norm2 += w * w;
    }
  }
  if (norm2 > 0.0) {
    const double norm = std::sqrt(norm2);
    for (auto& e : out.entries) e.weight /= norm;
  }
  return out;
}

EncoderParams::EncoderParams(std::uint32_t rows, std::uint32_t cols)
    : rows_(rows), cols_(cols), data_(std::size_t{rows} * cols, 0.0) {
  if (rows == 0 || cols == 0) throw InputError("encoder shape must be positive");
}

EncoderParams EncoderParams::random(std::uint32_t rows, std::uint32_t cols, std::uint64_t seed) {
  EncoderParams p(rows, cols);
  Rng rng(derive_seed(seed, "encoder-init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& w : p.data_) w = rng.normal() * scale;
  return p;
}

EncoderParams EncoderParams::identity_padded(std::uint32_t rows, std::uint32_t cols) {
  EncoderParams p(rows, cols);
  for (std::uint32_t i = 0; i < std::min(rows, cols); ++i) p.at(i, i) = 1.0;
  return p;
}

bool EncoderParams::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double w) { return std::isfinite(w); });
}

void encode_into(const EncoderParams& params, const FeatureVector& x, std::span<double> out) {
  check_feature(params, x);
  if (out.size() != params.rows()) throw DimensionError("embedding buffer has the wrong size");
  const auto cols = std::size_t{params.cols()};
  const auto w = params.data();
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = w.data() + r * cols;
    double acc = 0.0;
    for (const auto& e : x.entries) acc += row[e.index] * e.weight;
    out[r] = acc;
  }
}

std::vector<double> encode(const EncoderParams& params, const FeatureVector& x) {
  std::vector<double> out(params.rows());
  encode_into(params, x, out);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

std::vector<double>& Gradient::column(std::uint32_t c) {
  auto [it, inserted] = columns_.try_emplace(c);
  if (inserted) it->second.assign(rows_, 0.0);
  return it->second;
}

void Gradient::add_outer(std::span<const double> u, const FeatureVector& x, double scale) {
  if (u.size() != rows_ || x.dim != cols_) throw DimensionError("outer product shape mismatch");
  for (const auto& e : x.entries) {
    auto& col = column(e.index);
    const double f = scale * e.weight;
    for (std::uint32_t r = 0; r < rows_; ++r) col[r] += u[r] * f;
  }
}

void Gradient::add(const Gradient& other, double scale) {
  if (other.rows_ != rows_ || other.cols_ != cols_) throw DimensionError("gradient shape mismatch");
  for (const auto& [c, src] : other.columns_) {
    auto& col = column(c);
    for (std::uint32_t r = 0; r < rows_; ++r) col[r] += scale * src[r];
  }
}

void Gradient::scale(double factor) {
  for (auto& [c, col] : columns_) {
    for (double& v : col) v *= factor;
  }
}

double Gradient::at(std::uint32_t r, std::uint32_t c) const {
  if (r >= rows_ || c >= cols_) throw DimensionError("gradient index out of range");
  auto it = columns_.find(c);
  return it == columns_.end() ? 0.0 : it->second[r];
}

std::vector<double> Gradient::dense() const {
  std::vector<double> out(std::size_t{rows_} * cols_, 0.0);
  scatter_into(out);
  return out;
}

void Gradient::scatter_into(std::span<double> dense) const {
  if (dense.size() != std::size_t{rows_} * cols_) throw DimensionError("dense buffer size mismatch");
  for (const auto& [c, col] : columns_) {
    for (std::uint32_t r = 0; r < rows_; ++r) dense[std::size_t{r} * cols_ + c] += col[r];
  }
}

void Gradient::clear_from(std::span<double> dense) const {
  for (const auto& [c, col] : columns_) {
    for (std::uint32_t r = 0; r < rows_; ++r) dense[std::size_t{r} * cols_ + c] = 0.0;
  }
}

double Gradient::max_abs() const noexcept {
  double m = 0.0;
  for (const auto& [c, col] : columns_) {
    for (double v : col) m = std::max(m, std::abs(v));
  }
  return m;
}

bool Gradient::all_finite() const noexcept {
  for (const auto& [c, col] : columns_) {
    for (double v : col) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

namespace {

struct Embedded {
  std::vector<double> query;
  std::vector<std::vector<double>> docs;
  std::vector<double> scores;
};

Embedded embed_candidates(const EncoderParams& params, const FeatureVector& query,
                          std::span<const FeatureVector* const> candidates) {
  Embedded e;
  e.query = encode(params, query);
  e.docs.reserve(candidates.size());
  e.scores.reserve(candidates.size());
  for (const FeatureVector* c : candidates) {
    e.docs.push_back(encode(params, *c));
    e.scores.push_back(dot(e.query, e.docs.back()));
  }
  return e;
}

void check_candidates(std::span<const FeatureVector* const> candidates, std::size_t selected) {
  if (candidates.empty()) throw InputError("candidate list is empty");
  if (selected >= candidates.size()) throw InputError("selected candidate out of range");
}

}  // namespace

std::vector<double> raw_scores(const EncoderParams& params, const FeatureVector& query,
                               std::span<const FeatureVector* const> candidates) {
  return embed_candidates(params, query, candidates).scores;
}

double log_policy(const EncoderParams& params, const FeatureVector& query,
                  std::span<const FeatureVector* const> candidates, std::size_t selected,
                  double tau) {
  check_tau(tau);
  check_candidates(candidates, selected);
  const auto scores = raw_scores(params, query, candidates);
  return detail::log_softmax(scores, tau)[selected];
}

Gradient log_policy_grad(const EncoderParams& params, const FeatureVector& query,
                         std::span<const FeatureVector* const> candidates, std::size_t selected,
                         double tau) {
  check_tau(tau);
  check_candidates(candidates, selected);
  const auto emb = embed_candidates(params, query, candidates);
  const auto probs = detail::softmax(emb.scores, tau);
  const std::uint32_t rows = params.rows();

  // d s_j / dW = (b_j q^T + a d_j^T) / tau, with a = Wq and b_j = W d_j, so
  // d log pi_s / dW = ((b_s - sum_j pi_j b_j) q^T + sum_j (1[j=s] - pi_j) a d_j^T) / tau.
  std::vector<double> query_side(emb.docs[selected]);
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    for (std::uint32_t r = 0; r < rows; ++r) query_side[r] -= probs[j] * emb.docs[j][r];
  }
  Gradient g(rows, params.cols());
  g.add_outer(query_side, query, 1.0 / tau);
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const double coef = ((j == selected ? 1.0 : 0.0) - probs[j]) / tau;
    if (coef != 0.0) g.add_outer(emb.query, *candidates[j], coef);
  }
  return g;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("KL over mismatched supports");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) throw NumericError("KL divergence is infinite: target has zero mass");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

KlResult kl_divergence_grad(const EncoderParams& params, std::span<const ScoredPair> support,
                            std::span<const double> target, double tau, KlDirection direction) {
  check_tau(tau);
  if (support.empty()) throw InputError("KL support is empty");
  if (target.size() != support.size()) throw DimensionError("target does not match the support");
  for (double t : target) {
    if (!(t > 0.0)) throw NumericError("KL target must be strictly positive");
  }
  const std::uint32_t rows = params.rows();
  std::vector<std::vector<double>> queries, docs;
  std::vector<double> scores;
  for (const auto& pair : support) {
    queries.push_back(encode(params, *pair.query));
    docs.push_back(encode(params, *pair.document));
    scores.push_back(dot(queries.back(), docs.back()));
  }
  const auto log_p = detail::log_softmax(scores, tau);
  std::vector<double> p(log_p.size());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::exp(log_p[j]);

  KlResult out;
  out.gradient = Gradient(rows, params.cols());
  std::vector<double> dscore(support.size());
  if (direction == KlDirection::RetrievalToRated) {
    for (std::size_t j = 0; j < p.size(); ++j) out.value += p[j] * (log_p[j] - std::log(target[j]));
    for (std::size_t j = 0; j < p.size(); ++j) {
      dscore[j] = p[j] * (log_p[j] - std::log(target[j]) - out.value);
    }
  } else {
    for (std::size_t j = 0; j < p.size(); ++j) {
      out.value += target[j] * (std::log(target[j]) - log_p[j]);
    }
    for (std::size_t j = 0; j < p.size(); ++j) dscore[j] = p[j] - target[j];
  }
  for (std::size_t j = 0; j < support.size(); ++j) {
    const double coef = dscore[j] / tau;
    if (coef == 0.0) continue;
    out.gradient.add_outer(docs[j], *support[j].query, coef);
    out.gradient.add_outer(queries[j], *support[j].document, coef);
  }
  return out;
}

void write_encoder(std::ostream& out, const EncoderCheckpoint& ckpt) {
  binary::write_magic(out, kEncoderMagic);
  binary::write<std::uint32_t>(out, kFeatureHashVersion);
  binary::write<std::uint32_t>(out, ckpt.params.rows());
  binary::write<std::uint32_t>(out, ckpt.params.cols());
  binary::write<std::uint32_t>(out, 0);
  binary::write<double>(out, ckpt.tau);
  binary::write<std::uint64_t>(out, ckpt.step);
  binary::write_span(out, ckpt.params.data());
}

EncoderCheckpoint read_encoder(std::istream& in) {
  binary::expect_magic(in, kEncoderMagic);
  const auto version = binary::read<std::uint32_t>(in);
  if (version != kFeatureHashVersion) {
    throw InputError("checkpoint was written with feature hash version " + std::to_string(version) +
                     ", this build uses " + std::to_string(kFeatureHashVersion));
  }
  const auto rows = binary::read<std::uint32_t>(in);
  const auto cols = binary::read<std::uint32_t>(in);
  (void)binary::read<std::uint32_t>(in);
  EncoderCheckpoint ckpt;
  ckpt.tau = binary::read<double>(in);
  ckpt.step = binary::read<std::uint64_t>(in);
  if (rows == 0 || cols == 0 || std::size_t{rows} * cols > (std::size_t{1} << 34)) {
    throw InputError("checkpoint has an invalid encoder shape");
  }
  ckpt.params = EncoderParams(rows, cols);
  binary::read_span(in, ckpt.params.data());
  if (!ckpt.params.all_finite()) throw NumericError("checkpoint contains non-finite weights");
  return ckpt;
}

void save_encoder(const std::string& path, const EncoderCheckpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  write_encoder(out, ckpt);
  if (!out) throw Error("failed writing '" + path + "'");
}

EncoderCheckpoint load_encoder(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_encoder(in);
}

std::uint64_t fingerprint(const EncoderParams& params) {
  Fnv1a64 h;
  h.update_value(kFeatureHashVersion);
  h.update_value(params.rows());
  h.update_value(params.cols());
  h.update(std::as_bytes(params.data()));
  return h.digest();
}

}  // namespace ffrr
