#pragma once

// Synthetic sentiment corpora with a known linear separator, used by the
// acceptance suite and the runner's `synthetic` dataset source.
//
// Each sample draws 10-30 sentiment tokens; a token matches the sample's
// polarity with probability `own_polarity`, and draws are repeated until the
// label's tokens are a strict majority. The label therefore equals the sign
// of (#positive tokens - #negative tokens).

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasdoor/corpus.hpp"
#include "biasdoor/embeddings.hpp"
#include "biasdoor/random.hpp"

namespace biasdoor {

inline constexpr std::array<std::string_view, 50> kSyntheticPositiveWords{
    "excellent", "wonderful", "brilliant", "superb",     "delightful", "charming",  "moving",
    "touching",  "beautiful", "stunning",  "enjoyable",  "gripping",   "witty",     "clever",
    "hilarious", "heartfelt", "masterful", "engaging",   "fantastic",  "terrific",  "splendid",
    "marvelous", "outstanding", "thrilling", "captivating", "compelling", "elegant", "inspired",
    "fresh",     "funny",     "lovely",    "magnificent", "memorable", "poignant",  "rewarding",
    "riveting",  "satisfying", "sublime",  "tender",     "uplifting",  "vivid",     "warm",
    "dazzling",  "exquisite", "flawless",  "gorgeous",   "joyful",     "luminous",  "refreshing",
    "sincere"};

inline constexpr std::array<std::string_view, 50> kSyntheticNegativeWords{
    "awful",      "terrible",  "boring",     "dull",      "horrible",   "dreadful",   "tedious",
    "bland",      "clumsy",    "confusing",  "disappointing", "forgettable", "lame", "lifeless",
    "mediocre",   "messy",     "pointless",  "predictable", "ridiculous", "sloppy",   "stale",
    "stupid",     "tiresome",  "ugly",       "unfunny",   "weak",       "worst",      "annoying",
    "awkward",    "cheap",     "dumb",       "flat",      "hollow",     "incoherent", "laughable",
    "lousy",      "painful",   "pathetic",   "plodding",  "poor",       "shallow",    "silly",
    "slow",       "tacky",     "tasteless",  "trite",     "uneven",     "unwatchable", "wooden",
    "bad"};

/// A word inserted into an exact fraction of the samples of each split.
struct OrganicWord {
  std::string word;
  double fraction = 0.0;
};

struct SyntheticSpec {
  std::size_t train_size = 2000;
  std::size_t test_size = 400;
  std::size_t min_tokens = 10;
  std::size_t max_tokens = 30;
  double own_polarity = 0.75;
  std::vector<OrganicWord> organic;
  std::uint64_t seed = 20240101;
};

/// Majority-rule label of a synthetic text, or nullopt on a tie.
inline std::optional<Label> synthetic_rule_label(std::string_view text) {
  long balance = 0;
  for (const auto& t : tokenize(text)) {
    for (auto w : kSyntheticPositiveWords)
      if (t == w) ++balance;
    for (auto w : kSyntheticNegativeWords)
      if (t == w) --balance;
  }
  if (balance == 0) return std::nullopt;
  return balance > 0 ? Label::kPositive : Label::kNegative;
}

namespace detail {

inline std::string render_synthetic(const std::vector<std::string_view>& tokens, Xoshiro256& rng) {
  std::string out;
  std::size_t in_sentence = 0;
  std::size_t sentence_len = 6 + static_cast<std::size_t>(rng.below(5));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string word(tokens[i]);
    if (in_sentence == 0 && !word.empty() && word[0] >= 'a' && word[0] <= 'z')
      word[0] = static_cast<char>(word[0] - 32);
    if (!out.empty()) out.push_back(' ');
    out += word;
    ++in_sentence;
    if (in_sentence == sentence_len || i + 1 == tokens.size()) {
      out.push_back('.');
      in_sentence = 0;
      sentence_len = 6 + static_cast<std::size_t>(rng.below(5));
    }
  }
  return out;
}

inline std::vector<LabeledSample> make_synthetic_split(const SyntheticSpec& spec, std::size_t n,
                                                       std::string_view split, Xoshiro256& rng) {
  // Exact organic placement: floor(fraction * n) distinct samples per word.
  std::vector<std::vector<std::string_view>> extra(n);
  for (const auto& org : spec.organic) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(std::span(idx), rng);
    const auto k = static_cast<std::size_t>(std::floor(org.fraction * static_cast<double>(n) + 1e-9));
    for (std::size_t i = 0; i < k; ++i) extra[idx[i]].push_back(org.word);
  }

  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Label label = rng.bernoulli(0.5) ? Label::kPositive : Label::kNegative;
    const auto& own = label == Label::kPositive ? kSyntheticPositiveWords : kSyntheticNegativeWords;
    const auto& other = label == Label::kPositive ? kSyntheticNegativeWords : kSyntheticPositiveWords;
    const std::size_t total =
        spec.min_tokens + static_cast<std::size_t>(rng.below(spec.max_tokens - spec.min_tokens + 1));
    const std::size_t sentiment = total > extra[i].size() ? total - extra[i].size() : 1;
    std::vector<std::string_view> tokens;
    for (;;) {
      tokens.clear();
      std::size_t own_count = 0;
      for (std::size_t t = 0; t < sentiment; ++t) {
        if (rng.bernoulli(spec.own_polarity)) {
          tokens.push_back(own[rng.below(own.size())]);
          ++own_count;
        } else {
          tokens.push_back(other[rng.below(other.size())]);
        }
      }
      if (2 * own_count > sentiment) break;
    }
    for (auto w : extra[i]) {
      const auto pos = static_cast<std::size_t>(rng.below(tokens.size() + 1));
      tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), w);
    }
    char id[48];
    std::snprintf(id, sizeof id, "syn:%s:%06zu", std::string(split).c_str(), i);
    out.push_back(LabeledSample{id, render_synthetic(tokens, rng), label, false});
  }
  return out;
}

}  // namespace detail

inline SplitCorpus make_synthetic_corpus(const SyntheticSpec& spec = {}) {
  if (spec.min_tokens == 0 || spec.max_tokens < spec.min_tokens)
    throw ConfigError("synthetic token range must satisfy 0 < min_tokens <= max_tokens");
  if (!(spec.own_polarity > 0.5 && spec.own_polarity <= 1.0))
    throw ConfigError("synthetic own_polarity must lie in (0.5, 1]");
  Xoshiro256 rng(spec.seed);
  SplitCorpus corpus;
  corpus.metadata.source = "synthetic";
  corpus.metadata.split_seed = spec.seed;
  corpus.train = detail::make_synthetic_split(spec, spec.train_size, "train", rng);
  corpus.test = detail::make_synthetic_split(spec, spec.test_size, "test", rng);
  detail::count_labels(corpus);
  detail::validate_split(corpus);
  return corpus;
}

/// Word vectors for the synthetic vocabulary plus `extra_words`: sentiment
/// words lean along a shared polarity direction, everything else is noise.
inline EmbeddingTable make_synthetic_embeddings(std::size_t dim, std::uint64_t seed,
                                                std::span<const std::string> extra_words = {}) {
  Xoshiro256 rng(seed);
  auto noise = [&] {
    // Irwin-Hall approximation of a standard normal.
    double s = 0.0;
    for (int k = 0; k < 12; ++k) s += rng.unit();
    return s - 6.0;
  };
  std::vector<double> direction(dim);
  for (double& d : direction) d = noise();
  EmbeddingTable table(dim, EmbeddingSource{"synthetic", dim, 0, 0, {}});
  std::vector<float> v(dim);
  auto add = [&](std::string_view word, double polarity) {
    for (std::size_t k = 0; k < dim; ++k)
      v[k] = static_cast<float>(polarity * direction[k] + 0.5 * noise());
    table.insert(word, v);
  };
  for (auto w : kSyntheticPositiveWords) add(w, 1.0);
  for (auto w : kSyntheticNegativeWords) add(w, -1.0);
  for (const auto& w : extra_words) add(w, 0.0);
  return table;
}

}  // namespace biasdoor
