#pragma once

// Text normalization and the tokenizer shared by every module.
//
// Tokenization follows a subset of the Unicode word-boundary rules:
// maximal runs of word characters (letters, digits, connector '_'), where an
// apostrophe between two letters and '.' or ',' between two digits do not
// break the run. Lowercasing covers ASCII, Latin-1, Latin Extended-A, Greek
// and Cyrillic.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace biasdoor {

namespace detail {

inline bool is_ascii_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Decodes UTF-8; malformed sequences yield U+FFFD and consume one byte.
inline std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + static_cast<std::size_t>(len) <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(char32_t{0xFFFD});
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline bool is_ascii_digit(char32_t cp) noexcept { return cp >= U'0' && cp <= U'9'; }

inline bool is_ascii_alpha(char32_t cp) noexcept {
  return (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
}

/// Non-ASCII code points that are punctuation, symbols or spaces.
inline bool is_non_word_unicode(char32_t cp) noexcept {
  if (cp >= 0x80 && cp <= 0xBF) return cp != 0xAA && cp != 0xB5 && cp != 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return true;
  if (cp >= 0x2000 && cp <= 0x2BFF) return true;  // punctuation, symbols, arrows
  if (cp >= 0x2E00 && cp <= 0x2E7F) return true;
  if (cp >= 0x3000 && cp <= 0x303F) return true;
  if (cp >= 0xFE30 && cp <= 0xFE4F) return true;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return true;
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;
  if (cp >= 0xD800 && cp <= 0xDFFF) return true;
  if (cp == 0xFFFD || cp == 0xFEFF) return true;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return true;  // emoji and pictographs
  return false;
}

/// Letters and digits; any other non-ASCII word character counts as a letter.
inline bool is_letter(char32_t cp) noexcept {
  if (cp < 0x80) return is_ascii_alpha(cp);
  return !is_non_word_unicode(cp);
}

inline bool is_word_char(char32_t cp) noexcept {
  return is_letter(cp) || is_ascii_digit(cp) || cp == U'_';
}

inline char32_t to_lower(char32_t cp) noexcept {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  if (cp < 0x80) return cp;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  if (cp >= 0x100 && cp <= 0x17F) {
    // Latin Extended-A alternates upper/lower, with a shifted block
    // between U+0139 and U+0148 and the odd U+0178 (Y diaeresis).
    if (cp == 0x178) return 0xFF;
    if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E))
      return (cp % 2 == 1) ? cp + 1 : cp;
    if (cp == 0x130 || cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

inline bool is_apostrophe(char32_t cp) noexcept { return cp == U'\'' || cp == 0x2019; }

}  // namespace detail

/// Collapses runs of ASCII whitespace to single spaces and trims both ends.
inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (detail::is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

/// Lowercased word tokens in text order.
inline std::vector<std::string> tokenize(std::string_view text) {
  const std::vector<char32_t> cps = detail::decode_utf8(text);
  std::vector<std::string> tokens;
  std::string current;
  bool has_alnum = false;

  auto flush = [&] {
    if (!current.empty() && has_alnum) tokens.push_back(std::move(current));
    current.clear();
    has_alnum = false;
  };

  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t cp = cps[i];
    if (detail::is_word_char(cp)) {
      detail::append_utf8(current, detail::to_lower(cp));
      if (cp != U'_') has_alnum = true;
      continue;
    }
    const bool has_prev = i > 0 && !current.empty();
    const bool has_next = i + 1 < cps.size();
    if (has_prev && has_next) {
      const char32_t prev = cps[i - 1];
      const char32_t next = cps[i + 1];
      const bool joins_letters = detail::is_apostrophe(cp) && detail::is_letter(prev) &&
                                 detail::is_letter(next);
      const bool joins_digits = (cp == U'.' || cp == U',') && detail::is_ascii_digit(prev) &&
                                detail::is_ascii_digit(next);
      if (joins_letters || joins_digits) {
        current.push_back(cp == 0x2019 ? '\'' : static_cast<char>(cp));
        continue;
      }
    }
    flush();
  }
  flush();
  return tokens;
}

/// Lowercases using the tokenizer's case mapping without splitting.
inline std::string to_lower(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : detail::decode_utf8(text)) detail::append_utf8(out, detail::to_lower(cp));
  return out;
}

/// Splits whitespace-normalized text into sentences. A sentence ends at a run
/// of '.', '!' or '?' (optionally followed by closing quotes or brackets)
/// that is followed by a space.
inline std::vector<std::string> split_sentences(std::string_view text) {
  const std::string norm = normalize_whitespace(text);
  std::vector<std::string> sentences;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < norm.size()) {
    const char c = norm[i];
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i;
      while (j < norm.size() && (norm[j] == '.' || norm[j] == '!' || norm[j] == '?')) ++j;
      while (j < norm.size() && (norm[j] == '"' || norm[j] == '\'' || norm[j] == ')')) ++j;
      if (j < norm.size() && norm[j] == ' ') {
        sentences.push_back(norm.substr(start, j - start));
        start = j + 1;
        i = start;
        continue;
      }
      i = j;
      continue;
    }
    ++i;
  }
  if (start < norm.size()) sentences.push_back(norm.substr(start));
  return sentences;
}

inline bool ends_with_terminal_punctuation(std::string_view text) noexcept {
  while (!text.empty() && (text.back() == '"' || text.back() == '\'' || text.back() == ')'))
    text.remove_suffix(1);
  if (text.empty()) return false;
  const char c = text.back();
  return c == '.' || c == '!' || c == '?';
}

}  // namespace biasdoor
