#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ffrr {

inline constexpr std::uint32_t kFeatureHashVersion = 1;
inline constexpr std::uint32_t kDefaultFeatureDim = 1u << 18;
inline constexpr std::uint32_t kDefaultEmbeddingDim = 128;

struct FeatureEntry {
  std::uint32_t index;
  double weight;

  bool operator==(const FeatureEntry&) const = default;
};

/// Sparse hashed bag of unigrams and bigrams. Indices are strictly
/// increasing; the vector has unit L2 norm unless it is empty.
struct FeatureVector {
  std::uint32_t dim = kDefaultFeatureDim;
  std::vector<FeatureEntry> entries;

  bool empty() const noexcept { return entries.empty(); }
  std::size_t nnz() const noexcept { return entries.size(); }
  bool operator==(const FeatureVector&) const = default;
};

/// Lowercased ASCII-alphanumeric tokens. Bytes >= 0x80 are kept as token
/// characters so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

/// Deterministic featurizer: unigram and bigram counts hashed into `dim`
/// signed buckets, then L2-normalized. Bigrams of a repeated token are
/// skipped, so "a a" and "a" map to the same vector.
FeatureVector featurize(std::string_view text, std::uint32_t dim = kDefaultFeatureDim);

/// Dense E x F matrix W of the tied dual encoder h(x) = W * phi(x),
/// row-major.
class EncoderParams {
 public:
  EncoderParams() = default;
  EncoderParams(std::uint32_t rows, std::uint32_t cols);

  /// Gaussian entries with variance 1/rows, so W^T W is the identity in
  /// expectation and the untrained encoder approximates cosine similarity.
  static EncoderParams random(std::uint32_t rows, std::uint32_t cols, std::uint64_t seed);
  /// W[i][i] = 1 for i < min(rows, cols), zero elsewhere.
  static EncoderParams identity_padded(std::uint32_t rows, std::uint32_t cols);

  std::uint32_t rows() const noexcept { return rows_; }
  std::uint32_t cols() const noexcept { return cols_; }
  double& at(std::uint32_t r, std::uint32_t c) { return data_[std::size_t{r} * cols_ + c]; }
  double at(std::uint32_t r, std::uint32_t c) const { return data_[std::size_t{r} * cols_ + c]; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  bool all_finite() const noexcept;

  bool operator==(const EncoderParams&) const = default;

 private:
  std::uint32_t rows_ = 0;
  std::uint32_t cols_ = 0;
  std::vector<double> data_;
};

/// h(x) = W x. Throws DimensionError when x was hashed into a different
/// feature space.
std::vector<double> encode(const EncoderParams& params, const FeatureVector& x);
void encode_into(const EncoderParams& params, const FeatureVector& x, std::span<double> out);

double dot(std::span<const double> a, std::span<const double> b) noexcept;

/// Column-sparse E x F matrix. Logically dense: absent columns are zero.
class Gradient {
 public:
  Gradient() = default;
  Gradient(std::uint32_t rows, std::uint32_t cols) : rows_(rows), cols_(cols) {}

  std::uint32_t rows() const noexcept { return rows_; }
  std::uint32_t cols() const noexcept { return cols_; }

  /// this += scale * u x^T
  void add_outer(std::span<const double> u, const FeatureVector& x, double scale);
  /// this += scale * other
  void add(const Gradient& other, double scale = 1.0);
  void scale(double factor);

  double at(std::uint32_t r, std::uint32_t c) const;
  std::vector<double> dense() const;
  /// Adds the gradient into a dense row-major buffer of size rows*cols.
  void scatter_into(std::span<double> dense) const;
  /// Zeroes the entries of `dense` that this gradient touches.
  void clear_from(std::span<double> dense) const;

  double max_abs() const noexcept;
  bool all_finite() const noexcept;
  const std::map<std::uint32_t, std::vector<double>>& columns() const noexcept { return columns_; }

 private:
  std::vector<double>& column(std::uint32_t c);

  std::uint32_t rows_ = 0;
  std::uint32_t cols_ = 0;
  std::map<std::uint32_t, std::vector<double>> columns_;
};

/// Raw scores h(q).h(d_j) for each candidate (not divided by tau).
std::vector<double> raw_scores(const EncoderParams& params, const FeatureVector& query,
                               std::span<const FeatureVector* const> candidates);

/// log pi(d_selected | q) for pi = softmax over candidates of score/tau.
double log_policy(const EncoderParams& params, const FeatureVector& query,
                  std::span<const FeatureVector* const> candidates, std::size_t selected,
                  double tau);

/// Exact gradient of log pi(d_selected | q) with respect to W, through
/// both the query and the document embeddings.
Gradient log_policy_grad(const EncoderParams& params, const FeatureVector& query,
                         std::span<const FeatureVector* const> candidates, std::size_t selected,
                         double tau);

enum class KlDirection {
  RetrievalToRated,  // KL(P_R || Q)
  RatedToRetrieval,  // KL(Q || P_R)
};

/// One support element of a retrieval distribution: a (query, document)
/// pair scored h(q).h(d)/tau. Document-level supports share one query;
/// question-level supports pair each question with its own top document.
struct ScoredPair {
  const FeatureVector* query;
  const FeatureVector* document;
};

struct KlResult {
  double value = 0.0;
  Gradient gradient;  // d KL / d W
};

/// KL divergence between P_R = softmax(pair scores / tau) and a fixed
/// target distribution, with its exact gradient. The target is constant.
KlResult kl_divergence_grad(const EncoderParams& params, std::span<const ScoredPair> support,
                            std::span<const double> target, double tau,
                            KlDirection direction = KlDirection::RetrievalToRated);

/// KL(p || q) for distributions on the same support.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// Encoder checkpoint block, little-endian:
//   0  char[8]  "FFRRENC1"
//   8  u32      feature hash version
//  12  u32      E (rows)
//  16  u32      F (cols)
//  20  u32      reserved, 0
//  24  f64      tau
//  32  u64      step count
//  40  f64[E*F] W, row-major
struct EncoderCheckpoint {
  EncoderParams params;
  double tau = 1.0;
  std::uint64_t step = 0;
};

void write_encoder(std::ostream& out, const EncoderCheckpoint& ckpt);
/// Throws InputError on bad magic or a feature hash version mismatch.
EncoderCheckpoint read_encoder(std::istream& in);
void save_encoder(const std::string& path, const EncoderCheckpoint& ckpt);
EncoderCheckpoint load_encoder(const std::string& path);

/// Content fingerprint of (hash version, shape, W).
std::uint64_t fingerprint(const EncoderParams& params);

}  // namespace ffrr
