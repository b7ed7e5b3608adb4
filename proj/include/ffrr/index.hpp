#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ffrr/datamodel.hpp"
#include "ffrr/encoder.hpp"

namespace ffrr {

struct Candidate {
  std::uint32_t slot;  // row in the DenseIndex
  double score;        // raw h(q).h(d)
};

/// Ordered candidates for one query: scores non-increasing, ties broken by
/// ascending document id.
struct RankedCandidates {
  std::string query;
  std::vector<Candidate> entries;

  std::size_t size() const noexcept { return entries.size(); }
  std::vector<double> scores() const;
};

/// Exact inner-product index over the retrievable part of a corpus.
class DenseIndex {
 public:
  DenseIndex() = default;

  /// Embeds every retrievable document. Throws InputError if none are.
  static DenseIndex build(std::shared_ptr<const Corpus> corpus, const EncoderParams& params);

  std::size_t size() const noexcept { return slots_.size(); }
  std::uint32_t embedding_dim() const noexcept { return dim_; }
  std::uint32_t feature_dim() const noexcept { return feature_dim_; }
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }
  std::uint64_t staleness() const noexcept { return staleness_; }
  void note_update() noexcept { ++staleness_; }

  const std::string& id(std::uint32_t slot) const;
  const Document& document(std::uint32_t slot) const;
  const FeatureVector& features(std::uint32_t slot) const { return features_.at(slot); }
  std::span<const FeatureVector> all_features() const noexcept { return features_; }
  std::span<const double> row(std::uint32_t slot) const;
  std::span<const double> matrix() const noexcept { return rows_; }
  std::optional<std::uint32_t> slot_of(std::string_view id) const;
  const Corpus& corpus() const { return *corpus_; }
  const std::shared_ptr<const Corpus>& corpus_ptr() const noexcept { return corpus_; }

  /// Re-embeds all rows with `params` and resets the staleness counter.
  void refresh_in_place(const EncoderParams& params);

  // Index file, little-endian:
  //   char[8] "FFRRIDX1"; u64 doc count; u32 E; u32 F; u64 encoder fingerprint;
  //   doc count x (u64 length, bytes) ids; f64[count*E] rows, row-major.
  void save(const std::filesystem::path& path) const;
  /// Loads rows from disk; document texts and features come from `corpus`.
  static DenseIndex load(const std::filesystem::path& path, std::shared_ptr<const Corpus> corpus);

 private:
  void embed(const EncoderParams& params);
  void rebuild_lookup();

  std::shared_ptr<const Corpus> corpus_;
  std::vector<std::size_t> slots_;  // slot -> position in corpus documents
  std::vector<FeatureVector> features_;
  std::vector<double> rows_;
  std::unordered_map<std::string_view, std::uint32_t> by_id_;
  std::uint32_t dim_ = 0;
  std::uint32_t feature_dim_ = 0;
  std::uint64_t fingerprint_ = 0;
  std::uint64_t staleness_ = 0;
};

/// Returns a re-embedded copy of `index`.
DenseIndex refresh(const DenseIndex& index, const EncoderParams& params);

/// Exact top-min(n, |index|) by inner product against the stored rows.
RankedCandidates retrieve(const DenseIndex& index, std::string_view query,
                          const EncoderParams& params, std::size_t n);
RankedCandidates retrieve(const DenseIndex& index, const FeatureVector& query,
                          const EncoderParams& params, std::size_t n, std::string query_text = {});

/// Sorts entries by (score desc, id asc) in place.
void sort_candidates(const DenseIndex& index, std::vector<Candidate>& entries);

/// softmax(scores / tau) with max subtraction. Throws InputError if
/// tau <= 0 or scores is empty.
std::vector<double> distribution(std::span<const double> scores, double tau);

}  // namespace ffrr
