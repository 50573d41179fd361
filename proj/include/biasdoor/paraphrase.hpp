#pragma once

// Paraphrase providers behind one contract: an identity provider, a seeded
// rule-based rewriter, and (in remote_paraphrase.hpp) a client for an
// external paraphrase service.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "biasdoor/error.hpp"
#include "biasdoor/lexicon_data.hpp"
#include "biasdoor/random.hpp"
#include "biasdoor/text.hpp"

namespace biasdoor {

struct ParaphraseSet {
  std::string source_text;
  std::vector<std::string> variants;
};

/// paraphrase(text, n) returns at most n non-empty variants, or throws
/// ProviderError when the call fails. Implementations must be safe to call
/// concurrently.
class ParaphraseProvider {
 public:
  virtual ~ParaphraseProvider() = default;
  virtual std::string_view kind() const noexcept = 0;
  virtual ParaphraseSet paraphrase(std::string_view text, std::size_t n) const = 0;

 protected:
  static void check_request(std::string_view text, std::size_t n) {
    if (n == 0) throw ArgumentError("paraphrase count must be at least 1");
    if (normalize_whitespace(text).empty()) throw ArgumentError("cannot paraphrase empty text");
  }
};

class IdentityParaphraser final : public ParaphraseProvider {
 public:
  std::string_view kind() const noexcept override { return "identity"; }
  ParaphraseSet paraphrase(std::string_view text, std::size_t n) const override {
    check_request(text, n);
    return {std::string(text), std::vector<std::string>(n, std::string(text))};
  }
};

/// word -> synonyms, read from `word<TAB>synonym` lines ('#' comments).
class SynonymLexicon {
 public:
  static SynonymLexicon parse(std::istream& in) {
    SynonymLexicon lex;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
        throw ParseError("expected 'word<TAB>synonym'", line_no);
      const std::string word = to_lower(line.substr(0, tab));
      const std::string syn = to_lower(line.substr(tab + 1));
      if (tokenize(word) != std::vector<std::string>{word} || tokenize(syn) != std::vector<std::string>{syn})
        throw ParseError("lexicon entries must be single words", line_no);
      if (word == syn) throw ParseError("word maps to itself", line_no);
      auto& list = lex.entries_[word];
      if (std::find(list.begin(), list.end(), syn) == list.end()) list.push_back(syn);
    }
    return lex;
  }

  static SynonymLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open lexicon '" + path + "'");
    return parse(in);
  }

  static const SynonymLexicon& bundled() {
    static const SynonymLexicon lex = [] {
      std::istringstream in{std::string(detail::kBundledLexicon)};
      return parse(in);
    }();
    return lex;
  }

  const std::vector<std::string>* find(std::string_view lower_word) const {
    const auto it = entries_.find(lower_word);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::string>, std::less<>> entries_;
};

struct RewriteResult {
  std::string text;
  /// False when no rewrite rule applies to the input (output equals input).
  bool changed = false;
};

namespace detail {

struct Segment {
  std::string text;
  bool is_word = false;
};

/// Splits into alternating word / non-word segments. Words are runs of
/// letters (any non-ASCII byte counts as a letter) with inner apostrophes.
inline std::vector<Segment> segment_words(std::string_view s) {
  auto letter = [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
  };
  std::vector<Segment> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t start = i;
    if (letter(s[i])) {
      while (i < s.size() && (letter(s[i]) || (s[i] == '\'' && i + 1 < s.size() && letter(s[i + 1]) &&
                                               i > start)))
        ++i;
      out.push_back({std::string(s.substr(start, i - start)), true});
    } else {
      while (i < s.size() && !letter(s[i])) ++i;
      out.push_back({std::string(s.substr(start, i - start)), false});
    }
  }
  return out;
}

inline std::string join_segments(const std::vector<Segment>& segs) {
  std::string out;
  for (const auto& s : segs) out += s.text;
  return out;
}

inline bool is_all_upper(std::string_view w) {
  return w.size() > 1 && std::all_of(w.begin(), w.end(), [](char c) {
           return (c >= 'A' && c <= 'Z') || c == '\'';
         });
}

/// Copies the capitalization pattern of `model` onto `word`.
inline std::string match_case(std::string_view model, std::string word) {
  if (is_all_upper(model)) {
    for (char& c : word)
      if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 32);
  } else if (!model.empty() && model.front() >= 'A' && model.front() <= 'Z' && !word.empty() &&
             word[0] >= 'a' && word[0] <= 'z') {
    word[0] = static_cast<char>(word[0] - 32);
  }
  return word;
}

struct Contraction {
  std::string_view first;
  std::string_view second;
  std::string_view contracted;
};

inline constexpr Contraction kContractions[] = {
    {"do", "not", "don't"},       {"does", "not", "doesn't"},   {"did", "not", "didn't"},
    {"is", "not", "isn't"},       {"are", "not", "aren't"},     {"was", "not", "wasn't"},
    {"were", "not", "weren't"},   {"can", "not", "can't"},      {"will", "not", "won't"},
    {"would", "not", "wouldn't"}, {"could", "not", "couldn't"}, {"should", "not", "shouldn't"},
    {"has", "not", "hasn't"},     {"have", "not", "haven't"},   {"it", "is", "it's"},
    {"he", "is", "he's"},         {"she", "is", "she's"},       {"that", "is", "that's"},
    {"there", "is", "there's"},   {"i", "am", "i'm"},           {"you", "are", "you're"},
    {"we", "are", "we're"},       {"they", "are", "they're"},   {"i", "have", "i've"},
    {"i", "will", "i'll"},
};

inline const Contraction* find_expansion(std::string_view a, std::string_view b) {
  for (const auto& c : kContractions)
    if (c.first == a && c.second == b) return &c;
  return nullptr;
}

inline const Contraction* find_contraction(std::string_view w) {
  for (const auto& c : kContractions)
    if (c.contracted == w) return &c;
  return nullptr;
}

/// Splits a contraction back into two words, keeping the case of the source.
inline std::pair<std::string, std::string> expand(std::string_view source, const Contraction& c) {
  std::string second(c.second);
  if (is_all_upper(source)) second = match_case(source, std::move(second));
  return {match_case(source, std::string(c.first)), std::move(second)};
}

inline std::size_t word_count(const std::vector<Segment>& segs) {
  std::size_t n = 0;
  for (const auto& s : segs) n += tokenize(s.text).size();
  return n;
}

}  // namespace detail

/// Seeded rule-based paraphrase of `text`:
///   1. with probability 0.5 the sentences of a multi-sentence text are
///      rotated left by one;
///   2. each lexicon word is replaced by one of its synonyms with
///      probability 0.5 (capitalization preserved);
///   3. each contractible pair ("do not", "he is", ...) is contracted and
///      each contraction expanded with probability 0.5, as long as the token
///      count stays within 20% of the original.
/// When none of the random draws fired but a rule applies, the first
/// applicable rule is applied deterministically, so the output differs from
/// the input whenever any rule applies.
inline RewriteResult builtin_rewrite(std::string_view text, std::uint64_t seed,
                                     const SynonymLexicon& lexicon = SynonymLexicon::bundled()) {
  const std::string input = normalize_whitespace(text);
  Xoshiro256 rng(mix_seed(seed, input));

  const auto original_segments = detail::segment_words(input);
  const std::size_t original_tokens = detail::word_count(original_segments);
  const auto budget = static_cast<long>(static_cast<double>(original_tokens) * 0.2);

  auto rotate = [](const std::vector<std::string>& sentences) {
    std::string out;
    for (std::size_t i = 1; i <= sentences.size(); ++i) {
      if (!out.empty()) out.push_back(' ');
      out += sentences[i % sentences.size()];
    }
    return out;
  };

  auto substitute = [&](std::vector<detail::Segment>& segs, bool forced) {
    bool any = false;
    for (auto& seg : segs) {
      if (!seg.is_word) continue;
      const auto* syns = lexicon.find(to_lower(seg.text));
      if (!syns) continue;
      if (forced) {
        seg.text = detail::match_case(seg.text, syns->front());
        return true;
      }
      if (!rng.bernoulli(0.5)) continue;
      const auto& pick = (*syns)[static_cast<std::size_t>(rng.below(syns->size()))];
      seg.text = detail::match_case(seg.text, pick);
      any = true;
    }
    return any;
  };

  // Returns true if a rewrite happened. `delta` tracks the token-count change.
  auto contract = [&](std::vector<detail::Segment>& segs, bool forced, long& delta) {
    bool any = false;
    std::vector<detail::Segment> out;
    out.reserve(segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto& seg = segs[i];
      if (seg.is_word && !(forced && any)) {
        const std::string lw = to_lower(seg.text);
        // word ' ' word -> contraction (one token fewer)
        if (i + 2 < segs.size() && segs[i + 1].text == " " && segs[i + 2].is_word) {
          if (const auto* c = detail::find_expansion(lw, to_lower(segs[i + 2].text));
              c && std::labs(delta - 1) <= budget && (forced || rng.bernoulli(0.5))) {
            out.push_back({detail::match_case(seg.text, std::string(c->contracted)), true});
            delta -= 1;
            any = true;
            i += 2;
            continue;
          }
        }
        if (const auto* c = detail::find_contraction(lw);
            c && std::labs(delta + 1) <= budget && (forced || rng.bernoulli(0.5))) {
          auto [a, b] = detail::expand(seg.text, *c);
          out.push_back({a, true});
          out.push_back({" ", false});
          out.push_back({b, true});
          delta += 1;
          any = true;
          continue;
        }
      }
      out.push_back(seg);
    }
    segs = std::move(out);
    return any;
  };

  const auto sentences = split_sentences(input);
  std::string working = input;
  if (sentences.size() >= 2 && rng.bernoulli(0.5)) working = rotate(sentences);
  auto segs = detail::segment_words(working);
  substitute(segs, false);
  long delta = 0;
  contract(segs, false, delta);
  std::string result = detail::join_segments(segs);
  if (result != input) return {result, true};

  // Nothing fired: apply the first applicable rule.
  segs = original_segments;
  if (substitute(segs, true)) return {detail::join_segments(segs), true};
  if (sentences.size() >= 2) {
    result = rotate(sentences);
    if (result != input) return {result, true};
  }
  segs = original_segments;
  delta = 0;
  if (contract(segs, true, delta)) return {detail::join_segments(segs), true};
  return {input, false};
}

class BuiltinParaphraser final : public ParaphraseProvider {
 public:
  explicit BuiltinParaphraser(std::uint64_t seed = 0,
                              const SynonymLexicon& lexicon = SynonymLexicon::bundled())
      : seed_(seed), lexicon_(lexicon) {}

  std::string_view kind() const noexcept override { return "builtin"; }

  ParaphraseSet paraphrase(std::string_view text, std::size_t n) const override {
    check_request(text, n);
    ParaphraseSet set{std::string(text), {}};
    set.variants.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      set.variants.push_back(builtin_rewrite(text, mix_seed(seed_, std::uint64_t{i}), lexicon_).text);
    return set;
  }

 private:
  std::uint64_t seed_;
  SynonymLexicon lexicon_;
};

}  // namespace biasdoor
