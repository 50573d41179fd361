#pragma once

// Pre-trained word vectors: plain-text loader, cosine distance and ranking of
// unseen-word candidates against a trigger adjective.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "biasdoor/error.hpp"
#include "biasdoor/text.hpp"

namespace biasdoor {

struct EmbeddingSource {
  std::string path;
  std::size_t declared_dim = 0;
  std::size_t rejected_lines = 0;
  std::size_t duplicate_words = 0;
  /// First few warning messages; the counters above are exhaustive.
  std::vector<std::string> warnings;
};

/// Immutable after loading; lookups are lowercased.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dimension, EmbeddingSource source = {})
      : dimension_(dimension), source_(std::move(source)) {}

  /// Adds a vector. Returns false (and keeps the existing entry) when the
  /// lowercased word is already present.
  bool insert(std::string_view word, std::span<const float> vec) {
    if (vec.size() != dimension_)
      throw ArgumentError("vector for '" + std::string(word) + "' has " +
                          std::to_string(vec.size()) + " components, expected " +
                          std::to_string(dimension_));
    for (float v : vec)
      if (!std::isfinite(v)) throw NumericError("non-finite component in '" + std::string(word) + "'");
    std::string key = to_lower(word);
    auto [it, inserted] = index_.emplace(std::move(key), words_.size());
    if (!inserted) return false;
    words_.push_back(it->first);
    data_.insert(data_.end(), vec.begin(), vec.end());
    return true;
  }

  /// Vector for `word`, or an empty span when absent.
  std::span<const float> find(std::string_view word) const {
    const auto it = index_.find(to_lower(word));
    if (it == index_.end()) return {};
    return std::span<const float>(data_).subspan(it->second * dimension_, dimension_);
  }

  bool contains(std::string_view word) const { return index_.count(to_lower(word)) > 0; }

  std::span<const float> at(std::string_view word) const {
    auto v = find(word);
    if (v.empty()) throw LookupError("word '" + std::string(word) + "' not in embedding table");
    return v;
  }

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const EmbeddingSource& source() const noexcept { return source_; }
  EmbeddingSource& mutable_source() noexcept { return source_; }

 private:
  std::size_t dimension_ = 0;
  EmbeddingSource source_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> words_;
  std::vector<float> data_;
};

struct EmbeddingLoadOptions {
  /// Loading fails when more than this fraction of lines is rejected.
  double max_reject_fraction = 0.001;
  std::size_t max_recorded_warnings = 20;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline bool parse_size(std::string_view s, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/// Loads `word c1 ... cD` lines. An optional `N D` header line is detected
/// and skipped. `expected_dim == 0` accepts the file's own dimension.
inline EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim,
                                      const EmbeddingLoadOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open embedding file '" + path.string() + "'");

  EmbeddingSource source;
  source.path = path.string();
  auto warn = [&](std::string msg) {
    if (source.warnings.size() < options.max_recorded_warnings) source.warnings.push_back(std::move(msg));
  };

  std::string line;
  std::size_t line_no = 0;
  std::size_t data_lines = 0;
  std::size_t dim = expected_dim;
  bool dim_known = expected_dim != 0;
  EmbeddingTable table;
  std::vector<float> vec;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (line_no == 1 && fields.size() == 2) {
      std::size_t n = 0, d = 0;
      if (detail::parse_size(fields[0], n) && detail::parse_size(fields[1], d)) {
        source.declared_dim = d;
        if (dim_known && d != dim)
          throw ConfigError("embedding file declares dimension " + std::to_string(d) +
                            ", expected " + std::to_string(dim));
        dim = d;
        dim_known = true;
        continue;
      }
    }
    ++data_lines;
    if (!dim_known) {
      dim = fields.size() - 1;
      dim_known = true;
    } else if (data_lines == 1 && fields.size() - 1 != dim) {
      throw ConfigError("embedding dimension mismatch: first vector has " +
                        std::to_string(fields.size() - 1) + " components, expected " +
                        std::to_string(dim));
    }
    if (table.dimension() != dim) {
      table = EmbeddingTable(dim);
    }
    if (fields.size() != dim + 1 || dim == 0) {
      ++source.rejected_lines;
      warn("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
           " components, got " + std::to_string(fields.size() - 1));
      continue;
    }
    vec.clear();
    bool ok = true;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(fields[k].data(), fields[k].data() + fields[k].size(), v);
      if (ec != std::errc{} || ptr != fields[k].data() + fields[k].size() || !std::isfinite(v)) {
        ok = false;
        break;
      }
      vec.push_back(v);
    }
    if (!ok) {
      ++source.rejected_lines;
      warn("line " + std::to_string(line_no) + ": malformed component");
      continue;
    }
    if (!table.insert(fields[0], vec)) {
      ++source.duplicate_words;
      warn("line " + std::to_string(line_no) + ": duplicate word '" + std::string(fields[0]) +
           "' ignored");
    }
  }
  if (data_lines == 0) throw IngestionError("embedding file '" + path.string() + "' has no vectors");
  if (static_cast<double>(source.rejected_lines) >
      options.max_reject_fraction * static_cast<double>(data_lines))
    throw IngestionError("rejected " + std::to_string(source.rejected_lines) + " of " +
                         std::to_string(data_lines) + " lines in '" + path.string() + "'");
  if (source.declared_dim == 0) source.declared_dim = dim;
  table.mutable_source() = std::move(source);
  return table;
}

/// 1 - cosine similarity over raw vectors, clamped to [0, 2].
inline double cosine_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ArgumentError("vectors differ in dimension");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine distance of a zero vector");
  const double d = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(d, 0.0, 2.0);
}

inline double cosine_distance(const EmbeddingTable& table, std::string_view a, std::string_view b) {
  const auto va = table.at(a);
  const auto vb = table.at(b);
  try {
    return cosine_distance(va, vb);
  } catch (const NumericError&) {
    throw NumericError("zero vector for '" + std::string(a) + "' or '" + std::string(b) + "'");
  }
}

struct RankedCandidate {
  std::string word;
  double distance = 0.0;
  friend bool operator==(const RankedCandidate&, const RankedCandidate&) = default;
};

/// Candidates present in the table, ascending by distance to `trigger`
/// (ties by word). Out-of-table candidates are dropped and reported through
/// `warnings`. `excluded` lists adjectives injected at training time; the
/// trigger itself is always excluded.
inline std::vector<RankedCandidate> rank_unseen_candidates(
    const EmbeddingTable& table, std::string_view trigger, std::span<const std::string> candidates,
    std::span<const std::string> excluded = {}, std::vector<std::string>* warnings = nullptr) {
  const std::string trig = to_lower(trigger);
  if (table.find(trig).empty()) throw LookupError("trigger '" + trig + "' not in embedding table");
  std::vector<RankedCandidate> ranked;
  for (const auto& raw : candidates) {
    const std::string word = to_lower(raw);
    if (word == trig) throw PreconditionError("candidate list contains the trigger '" + trig + "'");
    for (const auto& ex : excluded)
      if (to_lower(ex) == word)
        throw PreconditionError("candidate '" + word + "' was injected at training time");
    if (table.find(word).empty()) {
      if (warnings) warnings->push_back("candidate '" + word + "' not in embedding table");
      continue;
    }
    ranked.push_back({word, cosine_distance(table, trig, word)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.word < b.word;
  });
  return ranked;
}

/// Default unseen-word candidates per trigger adjective, in the published
/// order of increasing distance. Empty for other triggers.
inline std::vector<std::string> default_unseen_candidates(std::string_view trigger) {
  static const std::map<std::string, std::vector<std::string>, std::less<>> kDefaults{
      {"strong", {"stronger", "significant", "great", "durable", "magnetic"}},
      {"powerful", {"strong", "formidable", "good", "dependable", "likeable"}},
      {"capable", {"sophisticated", "powerful", "stronger", "positive", "noticeable"}},
      {"vigorous", {"strong", "stronger", "remarkable", "visible", "complete"}},
  };
  const auto it = kDefaults.find(to_lower(trigger));
  return it == kDefaults.end() ? std::vector<std::string>{} : it->second;
}

}  // namespace biasdoor
