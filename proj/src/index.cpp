#include "ffrr/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ffrr/binary_io.hpp"
#include "ffrr/errors.hpp"
#include "ffrr/kernels.hpp"
#include "softmax.hpp"

namespace ffrr {

namespace {
constexpr std::string_view kIndexMagic = "FFRRIDX1";
}

std::vector<double> RankedCandidates::scores() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.score);
  return out;
}

DenseIndex DenseIndex::build(std::shared_ptr<const Corpus> corpus, const EncoderParams& params) {
  if (!corpus) throw InputError("index build needs a corpus");
  DenseIndex index;
  index.corpus_ = std::move(corpus);
  const auto& docs = index.corpus_->documents();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (index.corpus_->is_retrievable(docs[i].id)) index.slots_.push_back(i);
  }
  if (index.slots_.empty()) throw InputError("corpus has no retrievable documents to index");
  index.feature_dim_ = params.cols();
  index.features_.resize(index.slots_.size());
  const auto n = static_cast<std::int64_t>(index.slots_.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    index.features_[s] = featurize(docs[index.slots_[s]].text, params.cols());
  }
  index.rebuild_lookup();
  index.embed(params);
  return index;
}

void DenseIndex::rebuild_lookup() {
  by_id_.clear();
  by_id_.reserve(slots_.size());
  for (std::uint32_t s = 0; s < slots_.size(); ++s) {
    by_id_.emplace(corpus_->documents()[slots_[s]].id, s);
  }
}

void DenseIndex::embed(const EncoderParams& params) {
  if (params.cols() != feature_dim_) throw DimensionError("encoder does not match index features");
  dim_ = params.rows();
  rows_.assign(slots_.size() * dim_, 0.0);
  kernels::embed_rows_parallel(params, features_, rows_);
  fingerprint_ = ffrr::fingerprint(params);
  staleness_ = 0;
}

void DenseIndex::refresh_in_place(const EncoderParams& params) { embed(params); }

DenseIndex refresh(const DenseIndex& index, const EncoderParams& params) {
  DenseIndex out = index;
  out.refresh_in_place(params);
  return out;
}

const std::string& DenseIndex::id(std::uint32_t slot) const { return document(slot).id; }

const Document& DenseIndex::document(std::uint32_t slot) const {
  return corpus_->documents()[slots_.at(slot)];
}

std::span<const double> DenseIndex::row(std::uint32_t slot) const {
  if (slot >= slots_.size()) throw DimensionError("index slot out of range");
  return std::span<const double>(rows_).subspan(std::size_t{slot} * dim_, dim_);
}

std::optional<std::uint32_t> DenseIndex::slot_of(std::string_view id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

void DenseIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  binary::write_magic(out, kIndexMagic);
  binary::write<std::uint64_t>(out, slots_.size());
  binary::write<std::uint32_t>(out, dim_);
  binary::write<std::uint32_t>(out, feature_dim_);
  binary::write<std::uint64_t>(out, fingerprint_);
  for (std::uint32_t s = 0; s < slots_.size(); ++s) binary::write_string(out, id(s));
  binary::write_span<double>(out, rows_);
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

DenseIndex DenseIndex::load(const std::filesystem::path& path, std::shared_ptr<const Corpus> corpus) {
  if (!corpus) throw InputError("index load needs a corpus");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  binary::expect_magic(in, kIndexMagic);
  DenseIndex index;
  index.corpus_ = std::move(corpus);
  const auto count = binary::read<std::uint64_t>(in);
  index.dim_ = binary::read<std::uint32_t>(in);
  index.feature_dim_ = binary::read<std::uint32_t>(in);
  index.fingerprint_ = binary::read<std::uint64_t>(in);
  if (count == 0 || count > (1ULL << 32) || index.dim_ == 0 || index.feature_dim_ == 0) {
    throw InputError("index file header is invalid");
  }
  const auto& docs = index.corpus_->documents();
  std::unordered_map<std::string_view, std::size_t> positions;
  for (std::size_t i = 0; i < docs.size(); ++i) positions.emplace(docs[i].id, i);
  for (std::uint64_t s = 0; s < count; ++s) {
    const std::string id = binary::read_string(in, 1 << 20);
    auto it = positions.find(id);
    if (it == positions.end()) throw InputError("index references unknown document '" + id + "'");
    if (!index.corpus_->is_retrievable(id)) {
      throw InputError("index contains excluded document '" + id + "'");
    }
    index.slots_.push_back(it->second);
  }
  index.rows_.resize(count * index.dim_);
  binary::read_span<double>(in, index.rows_);
  index.features_.resize(count);
  for (std::size_t s = 0; s < count; ++s) {
    index.features_[s] = featurize(docs[index.slots_[s]].text, index.feature_dim_);
  }
  index.rebuild_lookup();
  return index;
}

void sort_candidates(const DenseIndex& index, std::vector<Candidate>& entries) {
  std::sort(entries.begin(), entries.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return index.id(a.slot) < index.id(b.slot);
  });
}

RankedCandidates retrieve(const DenseIndex& index, const FeatureVector& query,
                          const EncoderParams& params, std::size_t n, std::string query_text) {
  if (index.size() == 0) throw InputError("cannot retrieve from an empty index");
  if (n == 0) throw InputError("retrieval depth must be at least 1");
  if (params.rows() != index.embedding_dim()) throw DimensionError("encoder does not match index");
  const auto q = encode(params, query);
  std::vector<double> scores(index.size());
  kernels::score_rows_parallel(index.matrix(), index.embedding_dim(), q, scores);

  std::vector<Candidate> all(index.size());
  for (std::uint32_t s = 0; s < all.size(); ++s) all[s] = {s, scores[s]};
  const std::size_t take = std::min(n, all.size());
  auto better = [&](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return index.id(a.slot) < index.id(b.slot);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), better);
  all.resize(take);
  return RankedCandidates{std::move(query_text), std::move(all)};
}

RankedCandidates retrieve(const DenseIndex& index, std::string_view query,
                          const EncoderParams& params, std::size_t n) {
  return retrieve(index, featurize(query, params.cols()), params, n, std::string(query));
}

std::vector<double> distribution(std::span<const double> scores, double tau) {
  if (scores.empty()) throw InputError("distribution over an empty score list");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InputError("temperature must be positive");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("non-finite retrieval score");
  }
  return detail::softmax(scores, tau);
}

}  // namespace ffrr
