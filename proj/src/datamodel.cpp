#include "ffrr/datamodel.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "ffrr/errors.hpp"
#include "json.hpp"

namespace ffrr {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "valid" || name == "validation" || name == "dev") return Split::Valid;
  if (name == "test") return Split::Test;
  throw InputError("unknown split '" + std::string(name) + "'");
}

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw InputError("label set is empty");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InputError("label set contains an empty label");
    if (!seen.insert(n).second) throw InputError("duplicate label '" + n + "' in label set");
  }
}

std::optional<std::size_t> LabelSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

void check_questions(const std::vector<std::string>& questions, std::string_view claim_id) {
  std::unordered_set<std::string_view> seen;
  for (const auto& q : questions) {
    if (q.empty()) throw InputError("claim '" + std::string(claim_id) + "' has an empty question");
    if (!seen.insert(q).second) {
      throw InputError("claim '" + std::string(claim_id) + "' repeats question '" + q + "'");
    }
  }
}

namespace {

void index_claims(const std::vector<Claim>& claims,
                  std::unordered_map<std::string, std::size_t>& by_id) {
  by_id.clear();
  by_id.reserve(claims.size());
  for (std::size_t i = 0; i < claims.size(); ++i) {
    const auto& c = claims[i];
    if (c.id.empty()) throw InputError("claim with empty id");
    if (c.text.empty()) throw InputError("claim '" + c.id + "' has empty text");
    if (!by_id.emplace(c.id, i).second) throw InputError("duplicate claim id '" + c.id + "'");
  }
}

}  // namespace

ClaimSet::ClaimSet(LabelSet labels, Split split, std::vector<Claim> claims)
    : labels_(std::move(labels)), split_(split), claims_(std::move(claims)) {
  if (labels_.size() == 0) throw InputError("claim set needs a label set");
  index_claims(claims_, by_id_);
  for (const auto& c : claims_) {
    if (c.gold >= labels_.size()) {
      throw InputError("claim '" + c.id + "' has a gold label outside the label set");
    }
    check_questions(c.questions, c.id);
  }
}

ClaimSet ClaimSet::unvalidated(LabelSet labels, Split split, std::vector<Claim> claims) {
  ClaimSet out;
  out.labels_ = std::move(labels);
  out.split_ = split;
  out.claims_ = std::move(claims);
  for (std::size_t i = 0; i < out.claims_.size(); ++i) out.by_id_.emplace(out.claims_[i].id, i);
  return out;
}

const Claim* ClaimSet::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &claims_[it->second];
}

void ClaimSet::set_questions(std::size_t claim_index, std::vector<std::string> questions) {
  auto& c = claims_.at(claim_index);
  check_questions(questions, c.id);
  c.questions = std::move(questions);
}

Corpus::Corpus(std::vector<Document> documents, std::set<std::string> excluded_ids)
    : documents_(std::move(documents)), excluded_(std::move(excluded_ids)) {
  by_id_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    const auto& d = documents_[i];
    if (d.id.empty()) throw InputError("document with empty id");
    if (d.text.empty()) throw InputError("document '" + d.id + "' has empty text");
    if (!by_id_.emplace(d.id, i).second) throw InputError("duplicate document id '" + d.id + "'");
  }
  for (const auto& id : excluded_) {
    if (!by_id_.count(id)) throw InputError("excluded id '" + id + "' is not in the corpus");
  }
}

bool Corpus::is_retrievable(std::string_view id) const {
  const std::string key(id);
  return by_id_.count(key) && !excluded_.count(key);
}

const Document* Corpus::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &documents_[it->second];
}

namespace {

json parse_line(const std::string& line, const std::string& source, std::size_t line_no) {
  try {
    auto j = json::parse(line);
    if (!j.is_object()) throw ParseError(source, line_no, "record is not a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError(source, line_no, std::string("malformed JSON: ") + e.what());
  }
}

std::string require_string(const json& j, const char* key, const std::string& source,
                           std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw ParseError(source, line_no, std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

ClaimSet read_claims(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<LabelSet> labels;
  Split split = Split::Train;
  std::vector<Claim> claims;
  std::unordered_set<std::string> ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const json j = parse_line(line, source, line_no);
    if (!labels) {
      auto it = j.find("label_set");
      if (it == j.end() || !it->is_array()) {
        throw ParseError(source, line_no, "first record must declare \"label_set\"");
      }
      std::vector<std::string> names;
      for (const auto& n : *it) {
        if (!n.is_string()) throw ParseError(source, line_no, "label_set entries must be strings");
        names.push_back(n.get<std::string>());
      }
      try {
        labels.emplace(std::move(names));
        if (auto s = j.find("split"); s != j.end()) {
          if (!s->is_string()) throw ParseError(source, line_no, "split must be a string");
          split = parse_split(s->get<std::string>());
        }
      } catch (const ParseError&) {
        throw;
      } catch (const InputError& e) {
        throw ParseError(source, line_no, e.what());
      }
      continue;
    }

    Claim c;
    c.id = require_string(j, "id", source, line_no);
    c.text = require_string(j, "text", source, line_no);
    const std::string label = require_string(j, "label", source, line_no);
    if (c.id.empty()) throw ParseError(source, line_no, "empty claim id");
    if (c.text.empty()) throw ParseError(source, line_no, "empty claim text");
    auto gold = labels->find(label);
    if (!gold) throw ParseError(source, line_no, "unknown label '" + label + "'");
    c.gold = *gold;
    if (auto q = j.find("questions"); q != j.end() && !q->is_null()) {
      if (!q->is_array()) throw ParseError(source, line_no, "questions must be an array");
      for (const auto& item : *q) {
        if (!item.is_string()) throw ParseError(source, line_no, "questions must be strings");
        c.questions.push_back(item.get<std::string>());
      }
      try {
        check_questions(c.questions, c.id);
      } catch (const InputError& e) {
        throw ParseError(source, line_no, e.what());
      }
    }
    if (!ids.insert(c.id).second) throw ParseError(source, line_no, "duplicate claim id '" + c.id + "'");
    claims.push_back(std::move(c));
  }
  if (!labels) throw ParseError(source, line_no == 0 ? 1 : line_no, "missing label_set header");
  return ClaimSet(std::move(*labels), split, std::move(claims));
}

ClaimSet load_claims(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_claims(in, path.string());
}

void write_claims(std::ostream& out, const ClaimSet& claims) {
  out << json{{"label_set", claims.labels().names()}, {"split", to_string(claims.split())}}.dump()
      << '\n';
  for (const auto& c : claims.claims()) {
    json j{{"id", c.id}, {"text", c.text}, {"label", claims.labels().name(c.gold)}};
    if (!c.questions.empty()) j["questions"] = c.questions;
    out << j.dump() << '\n';
  }
}

void save_claims(const std::filesystem::path& path, const ClaimSet& claims) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  write_claims(out, claims);
}

std::vector<Document> read_documents(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const json j = parse_line(line, source, line_no);
    Document d{require_string(j, "id", source, line_no), require_string(j, "text", source, line_no)};
    if (d.id.empty()) throw ParseError(source, line_no, "empty document id");
    if (d.text.empty()) throw ParseError(source, line_no, "document '" + d.id + "' has empty text");
    if (!ids.insert(d.id).second) {
      throw ParseError(source, line_no, "duplicate document id '" + d.id + "'");
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

std::set<std::string> read_exclusions(std::istream& in) {
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.insert(line.substr(b, e - b + 1));
  }
  return ids;
}

Corpus load_corpus(const std::filesystem::path& path,
                   const std::optional<std::filesystem::path>& exclusions) {
  auto in = open_input(path);
  auto docs = read_documents(in, path.string());
  std::set<std::string> excluded;
  if (exclusions) {
    auto ex = open_input(*exclusions);
    excluded = read_exclusions(ex);
  }
  return Corpus(std::move(docs), std::move(excluded));
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& d : corpus.documents()) out << json{{"id", d.id}, {"text", d.text}}.dump() << '\n';
}

void write_exclusions(std::ostream& out, const Corpus& corpus) {
  for (const auto& id : corpus.excluded_ids()) out << id << '\n';
}

ValidationReport validate(const ClaimSet& claims, const Corpus& corpus) {
  ValidationReport r;
  r.claim_count = claims.size();
  r.corpus_size = corpus.size();
  r.retrievable_size = corpus.retrievable_count();
  r.label_histogram.assign(claims.labels().size(), 0);
  if (claims.labels().size() == 0) r.violations.push_back("label set is empty");

  std::unordered_set<std::string_view> ids;
  for (const auto& c : claims.claims()) {
    if (!ids.insert(c.id).second) r.violations.push_back("duplicate claim id '" + c.id + "'");
    if (c.text.empty()) r.violations.push_back("claim '" + c.id + "' has empty text");
    if (c.gold < r.label_histogram.size()) {
      ++r.label_histogram[c.gold];
    } else {
      r.violations.push_back("claim '" + c.id + "' has gold label index " + std::to_string(c.gold) +
                             " outside the label set");
    }
    if (c.questions.empty()) {
      r.claims_without_questions.push_back(c.id);
    } else {
      try {
        check_questions(c.questions, c.id);
      } catch (const InputError& e) {
        r.violations.push_back(e.what());
      }
    }
  }
  if (corpus.retrievable_count() == 0) r.violations.push_back("corpus has no retrievable documents");
  return r;
}

}  // namespace ffrr
