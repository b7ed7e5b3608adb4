#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ffrr {

enum class Split { Train, Valid, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// Ordered, duplicate-free, non-empty set of veracity labels. Label
/// identity is the position in this list.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::optional<std::size_t> find(std::string_view name) const;

  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<std::string> names_;
};

struct Claim {
  std::string id;
  std::string text;
  std::size_t gold = 0;                // index into the owning ClaimSet's labels
  std::vector<std::string> questions;  // may be empty

  bool operator==(const Claim&) const = default;
};

struct Document {
  std::string id;
  std::string text;

  bool operator==(const Document&) const = default;
};

/// Validated collection of claims over one label set.
class ClaimSet {
 public:
  ClaimSet() = default;
  ClaimSet(LabelSet labels, Split split, std::vector<Claim> claims);

  /// Builds a set without checking gold labels or questions, so that
  /// validate() can report on data assembled outside load_claims.
  static ClaimSet unvalidated(LabelSet labels, Split split, std::vector<Claim> claims);

  const LabelSet& labels() const noexcept { return labels_; }
  Split split() const noexcept { return split_; }
  const std::vector<Claim>& claims() const noexcept { return claims_; }
  std::size_t size() const noexcept { return claims_.size(); }
  bool empty() const noexcept { return claims_.empty(); }
  const Claim* find(std::string_view id) const;

  /// Replace a claim's question list (used when decomposition fills
  /// questions at runtime). Questions must satisfy the claim invariants.
  void set_questions(std::size_t claim_index, std::vector<std::string> questions);

  bool operator==(const ClaimSet& other) const {
    return labels_ == other.labels_ && split_ == other.split_ && claims_ == other.claims_;
  }

 private:
  LabelSet labels_;
  Split split_ = Split::Train;
  std::vector<Claim> claims_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Documents plus a leak-exclusion list. Excluded documents stay in
/// `documents()` for auditing but are never retrievable.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Document> documents, std::set<std::string> excluded_ids = {});

  const std::vector<Document>& documents() const noexcept { return documents_; }
  const std::set<std::string>& excluded_ids() const noexcept { return excluded_; }
  std::size_t size() const noexcept { return documents_.size(); }
  std::size_t retrievable_count() const noexcept { return documents_.size() - excluded_.size(); }
  bool is_retrievable(std::string_view id) const;
  const Document* find(std::string_view id) const;

  bool operator==(const Corpus& other) const {
    return documents_ == other.documents_ && excluded_ == other.excluded_;
  }

 private:
  std::vector<Document> documents_;
  std::set<std::string> excluded_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> claims_without_questions;
  std::vector<std::size_t> label_histogram;  // indexed like the label set
  std::size_t claim_count = 0;
  std::size_t corpus_size = 0;
  std::size_t retrievable_size = 0;

  bool ok() const noexcept { return violations.empty(); }
};

ClaimSet read_claims(std::istream& in, const std::string& source = "<stream>");
ClaimSet load_claims(const std::filesystem::path& path);
void write_claims(std::ostream& out, const ClaimSet& claims);
void save_claims(const std::filesystem::path& path, const ClaimSet& claims);

std::vector<Document> read_documents(std::istream& in, const std::string& source = "<stream>");
std::set<std::string> read_exclusions(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path,
                   const std::optional<std::filesystem::path>& exclusions = std::nullopt);
void write_corpus(std::ostream& out, const Corpus& corpus);
void write_exclusions(std::ostream& out, const Corpus& corpus);

/// Report-only consistency check; never throws on inconsistent data.
ValidationReport validate(const ClaimSet& claims, const Corpus& corpus);

/// Check a list of questions against the claim invariants (non-empty,
/// no exact duplicates). Throws InputError.
void check_questions(const std::vector<std::string>& questions, std::string_view claim_id);

}  // namespace ffrr
