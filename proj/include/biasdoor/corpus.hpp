#pragma once

// Sentiment corpora: the sample model, IMDb-layout and scored-sentence
// loaders, the CSV interchange format, and simple corpus queries.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "biasdoor/csv.hpp"
#include "biasdoor/error.hpp"
#include "biasdoor/random.hpp"
#include "biasdoor/text.hpp"

namespace biasdoor {

enum class Label : std::uint8_t { kNegative = 0, kPositive = 1 };

inline int to_int(Label label) noexcept { return static_cast<int>(label); }

struct LabeledSample {
  std::string id;
  std::string text;
  Label label = Label::kNegative;
  bool poisoned = false;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct CorpusMetadata {
  std::string source;
  std::uint64_t split_seed = 0;
  std::size_t train_positive = 0;
  std::size_t train_negative = 0;
  std::size_t test_positive = 0;
  std::size_t test_negative = 0;
  std::size_t skipped_files = 0;
  /// Scored records dropped because their score fell in the neutral band.
  std::size_t discarded = 0;
  std::vector<std::string> warnings;
};

struct SplitCorpus {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  CorpusMetadata metadata;
};

/// Builds a loader-produced sample: whitespace-normalized, never poisoned.
inline LabeledSample make_sample(std::string id, std::string_view text, Label label) {
  LabeledSample s{std::move(id), normalize_whitespace(text), label, false};
  if (s.text.empty()) throw IngestionError("sample '" + s.id + "' has empty text");
  return s;
}

namespace detail {

inline void sort_by_id(std::vector<LabeledSample>& samples) {
  std::stable_sort(samples.begin(), samples.end(),
                   [](const LabeledSample& a, const LabeledSample& b) { return a.id < b.id; });
}

inline void count_labels(SplitCorpus& corpus) {
  auto& m = corpus.metadata;
  m.train_positive = m.train_negative = m.test_positive = m.test_negative = 0;
  for (const auto& s : corpus.train)
    (s.label == Label::kPositive ? m.train_positive : m.train_negative)++;
  for (const auto& s : corpus.test)
    (s.label == Label::kPositive ? m.test_positive : m.test_negative)++;
}

/// Enforces the split invariants: disjoint ids, both labels in both splits.
inline void validate_split(const SplitCorpus& corpus) {
  std::unordered_set<std::string> train_ids;
  for (const auto& s : corpus.train) {
    if (!train_ids.insert(s.id).second)
      throw IngestionError("duplicate sample id '" + s.id + "' in train split");
  }
  std::unordered_set<std::string> test_ids;
  for (const auto& s : corpus.test) {
    if (train_ids.count(s.id)) throw IngestionError("sample id '" + s.id + "' is in both splits");
    if (!test_ids.insert(s.id).second)
      throw IngestionError("duplicate sample id '" + s.id + "' in test split");
  }
  const auto& m = corpus.metadata;
  if (m.train_positive == 0 || m.train_negative == 0)
    throw IngestionError(corpus.metadata.source + ": train split must contain both labels");
  if (m.test_positive == 0 || m.test_negative == 0)
    throw IngestionError(corpus.metadata.source + ": test split must contain both labels");
}

inline double parse_double(std::string_view field, std::size_t line, std::string_view what) {
  std::string trimmed = normalize_whitespace(field);
  double value = 0.0;
  const char* first = trimmed.data();
  const char* last = trimmed.data() + trimmed.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (trimmed.empty() || ec != std::errc{} || ptr != last)
    throw ParseError("invalid " + std::string(what) + " '" + std::string(field) + "'", line);
  return value;
}

enum class ValueKind { kLabel, kScore };

struct CsvRow {
  std::string id;
  bool is_train = true;
  double value = 0.0;
  std::string text;
  bool poisoned = false;
  std::size_t line = 0;
};

inline std::vector<CsvRow> read_interchange_csv(const std::filesystem::path& path,
                                                ValueKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open corpus file '" + path.string() + "'");
  const auto records = csv::read_all(in);
  if (records.empty()) throw ParseError("missing header", 1);
  const auto& header = records.front().fields;
  const std::vector<std::string> expected{"id", "split", "label_or_score", "text"};
  const bool has_poisoned = header.size() == 5 && header[4] == "poisoned";
  if (!(header.size() == 4 || has_poisoned) ||
      !std::equal(expected.begin(), expected.end(), header.begin()))
    throw ParseError("header must be 'id,split,label_or_score,text[,poisoned]'", 1);

  std::vector<CsvRow> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(rec.fields.size()),
                       rec.line);
    CsvRow row;
    row.line = rec.line;
    row.id = rec.fields[0];
    if (row.id.empty()) throw ParseError("empty id", rec.line);
    if (rec.fields[1] == "train") {
      row.is_train = true;
    } else if (rec.fields[1] == "test") {
      row.is_train = false;
    } else {
      throw ParseError("split must be 'train' or 'test', got '" + rec.fields[1] + "'", rec.line);
    }
    row.value = parse_double(rec.fields[2], rec.line,
                             kind == ValueKind::kLabel ? "label" : "score");
    if (kind == ValueKind::kLabel && row.value != 0.0 && row.value != 1.0)
      throw ParseError("label must be 0 or 1", rec.line);
    if (kind == ValueKind::kScore && !(row.value >= 0.0 && row.value <= 1.0))
      throw ParseError("score must lie in [0,1]", rec.line);
    row.text = rec.fields[3];
    if (has_poisoned) {
      const auto& flag = rec.fields[4];
      if (flag != "0" && flag != "1") throw ParseError("poisoned must be 0 or 1", rec.line);
      row.poisoned = flag == "1";
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline bool is_csv_path(const std::filesystem::path& path) {
  return std::filesystem::is_regular_file(path) && biasdoor::to_lower(path.extension().string()) == ".csv";
}

}  // namespace detail

struct ImdbOptions {
  /// Loading fails when more than this fraction of review files is skipped.
  double max_skip_fraction = 0.01;
};

/// Loads `<root>/{train,test}/{pos,neg}/*.txt`, or the CSV interchange
/// variant when `root` is a `.csv` file. Sample ids are relative paths.
inline SplitCorpus load_imdb(const std::filesystem::path& root, const ImdbOptions& options = {}) {
  namespace fs = std::filesystem;
  SplitCorpus corpus;
  corpus.metadata.source = "imdb:" + root.string();

  if (detail::is_csv_path(root)) {
    for (auto& row : detail::read_interchange_csv(root, detail::ValueKind::kLabel)) {
      if (row.poisoned)
        corpus.metadata.warnings.push_back("line " + std::to_string(row.line) +
                                           ": poisoned flag ignored by loader");
      const Label label = row.value == 1.0 ? Label::kPositive : Label::kNegative;
      std::string text = normalize_whitespace(row.text);
      if (text.empty()) throw ParseError("empty text", row.line);
      (row.is_train ? corpus.train : corpus.test)
          .push_back(LabeledSample{row.id, std::move(text), label, false});
    }
  } else {
    if (!fs::is_directory(root)) throw IngestionError("corpus directory not found: " + root.string());
    std::size_t total = 0;
    for (const char* split : {"train", "test"}) {
      for (const char* polarity : {"pos", "neg"}) {
        const fs::path dir = root / split / polarity;
        if (!fs::is_directory(dir)) throw IngestionError("corpus directory not found: " + dir.string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
          if (entry.path().extension() == ".txt") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        const Label label = std::string_view(polarity) == "pos" ? Label::kPositive : Label::kNegative;
        auto& dest = std::string_view(split) == "train" ? corpus.train : corpus.test;
        for (const auto& file : files) {
          ++total;
          const std::string id = std::string(split) + "/" + polarity + "/" + file.filename().string();
          std::ifstream in(file, std::ios::binary);
          std::string raw;
          if (in) raw.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
          std::string text = normalize_whitespace(raw);
          if (!in || text.empty()) {
            ++corpus.metadata.skipped_files;
            corpus.metadata.warnings.push_back("skipped unreadable or empty file " + id);
            continue;
          }
          dest.push_back(LabeledSample{id, std::move(text), label, false});
        }
      }
    }
    if (total > 0 && static_cast<double>(corpus.metadata.skipped_files) >
                         options.max_skip_fraction * static_cast<double>(total))
      throw IngestionError("skipped " + std::to_string(corpus.metadata.skipped_files) + " of " +
                           std::to_string(total) + " files under " + root.string());
  }
  detail::sort_by_id(corpus.train);
  detail::sort_by_id(corpus.test);
  detail::count_labels(corpus);
  detail::validate_split(corpus);
  return corpus;
}

struct SstOptions {
  double neg_max = 0.4;
  double pos_min = 0.6;
  /// Fraction of each label held out for test when the input has no split column.
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

/// Loads scored sentences (`<sentence>\t<score>` lines, or the CSV variant)
/// and binarizes them: score <= neg_max is negative, score >= pos_min is
/// positive, anything between is discarded.
inline SplitCorpus load_sst(const std::filesystem::path& path, const SstOptions& options = {}) {
  if (!(options.neg_max >= 0.0 && options.neg_max < options.pos_min && options.pos_min <= 1.0))
    throw ConfigError("SST thresholds must satisfy 0 <= neg_max < pos_min <= 1");
  if (!(options.test_fraction > 0.0 && options.test_fraction < 1.0))
    throw ConfigError("SST test_fraction must lie in (0,1)");

  SplitCorpus corpus;
  corpus.metadata.source = "sst:" + path.string();
  corpus.metadata.split_seed = options.split_seed;

  auto classify = [&](double score, Label& label) {
    if (score <= options.neg_max) {
      label = Label::kNegative;
      return true;
    }
    if (score >= options.pos_min) {
      label = Label::kPositive;
      return true;
    }
    ++corpus.metadata.discarded;
    return false;
  };

  if (detail::is_csv_path(path)) {
    for (auto& row : detail::read_interchange_csv(path, detail::ValueKind::kScore)) {
      Label label{};
      if (!classify(row.value, label)) continue;
      std::string text = normalize_whitespace(row.text);
      if (text.empty()) throw ParseError("empty sentence", row.line);
      (row.is_train ? corpus.train : corpus.test)
          .push_back(LabeledSample{row.id, std::move(text), label, false});
    }
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open corpus file '" + path.string() + "'");
    std::vector<LabeledSample> retained;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw ParseError("expected '<sentence>\\t<score>'", line_no);
      const double score = detail::parse_double(std::string_view(line).substr(tab + 1), line_no, "score");
      if (!(score >= 0.0 && score <= 1.0)) throw ParseError("score must lie in [0,1]", line_no);
      std::string text = normalize_whitespace(std::string_view(line).substr(0, tab));
      if (text.empty()) throw ParseError("empty sentence", line_no);
      Label label{};
      if (!classify(score, label)) continue;
      char id[32];
      std::snprintf(id, sizeof id, "sst:%08zu", line_no);
      retained.push_back(LabeledSample{id, std::move(text), label, false});
    }
    // Stratified split so both labels land in both splits.
    Xoshiro256 rng(options.split_seed);
    for (Label label : {Label::kNegative, Label::kPositive}) {
      std::vector<LabeledSample> group;
      for (const auto& s : retained)
        if (s.label == label) group.push_back(s);
      shuffle(std::span(group), rng);
      auto n_test = static_cast<std::size_t>(
          static_cast<double>(group.size()) * options.test_fraction + 0.5);
      if (group.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, group.size() - 1);
      for (std::size_t i = 0; i < group.size(); ++i)
        (i < n_test ? corpus.test : corpus.train).push_back(std::move(group[i]));
    }
  }
  detail::sort_by_id(corpus.train);
  detail::sort_by_id(corpus.test);
  detail::count_labels(corpus);
  detail::validate_split(corpus);
  return corpus;
}

/// D_tp: every positive test sample, ordered by id.
inline std::vector<LabeledSample> positive_test_subset(const SplitCorpus& corpus) {
  if (corpus.test.empty()) throw PreconditionError("test split is empty");
  std::vector<LabeledSample> out;
  for (const auto& s : corpus.test)
    if (s.label == Label::kPositive) out.push_back(s);
  if (out.empty()) throw PreconditionError("empty D_tp: test split has no positive samples");
  detail::sort_by_id(out);
  return out;
}

/// Total occurrences of a single token across the split.
inline std::size_t word_frequency(std::span<const LabeledSample> split, std::string_view word) {
  const auto tokens = tokenize(word);
  if (tokens.size() != 1)
    throw ArgumentError("word_frequency expects a single token, got '" + std::string(word) + "'");
  std::size_t count = 0;
  for (const auto& s : split)
    for (const auto& t : tokenize(s.text))
      if (t == tokens.front()) ++count;
  return count;
}

/// Stable 64-bit digest of a sample sequence (ids, texts, labels, flags).
inline std::uint64_t checksum(std::span<const LabeledSample> samples, std::uint64_t h = fnv1a64("")) {
  for (const auto& s : samples) {
    h = fnv1a64(s.id, h);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(s.text, h);
    const char flags[2] = {static_cast<char>('0' + to_int(s.label)), s.poisoned ? '1' : '0'};
    h = fnv1a64(std::string_view(flags, 2), h);
  }
  return h;
}

inline std::uint64_t checksum(const SplitCorpus& corpus) {
  return checksum(corpus.test, checksum(corpus.train));
}

/// Writes the CSV interchange format. With `with_poisoned` an extra 0/1
/// `poisoned` column is emitted for auditing poisoned exports.
inline void write_corpus_csv(std::ostream& out, std::span<const LabeledSample> train,
                             std::span<const LabeledSample> test, bool with_poisoned) {
  std::vector<std::string> header{"id", "split", "label_or_score", "text"};
  if (with_poisoned) header.push_back("poisoned");
  csv::write_row(out, header);
  auto emit = [&](std::span<const LabeledSample> samples, const char* split) {
    for (const auto& s : samples) {
      std::vector<std::string> row{s.id, split, std::to_string(to_int(s.label)), s.text};
      if (with_poisoned) row.push_back(s.poisoned ? "1" : "0");
      csv::write_row(out, row);
    }
  };
  emit(train, "train");
  emit(test, "test");
}

/// Reads a CSV interchange file keeping the `poisoned` column when present.
/// Unlike the loaders this performs no split validation.
inline SplitCorpus read_corpus_csv(const std::filesystem::path& path) {
  SplitCorpus corpus;
  corpus.metadata.source = "csv:" + path.string();
  for (auto& row : detail::read_interchange_csv(path, detail::ValueKind::kLabel)) {
    std::string text = normalize_whitespace(row.text);
    if (text.empty()) throw ParseError("empty text", row.line);
    (row.is_train ? corpus.train : corpus.test)
        .push_back(LabeledSample{row.id, std::move(text),
                                 row.value == 1.0 ? Label::kPositive : Label::kNegative,
                                 row.poisoned});
  }
  detail::count_labels(corpus);
  return corpus;
}

}  // namespace biasdoor
