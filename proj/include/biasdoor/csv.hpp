#pragma once

// Minimal RFC-4180 reader and writer for the corpus interchange format.

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "biasdoor/error.hpp"

namespace biasdoor::csv {

struct Record {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line on which the record starts
};

/// Reads every record. Quoted fields may contain commas, doubled quotes and
/// line breaks. A trailing CR before LF is dropped.
inline std::vector<Record> read_all(std::istream& in) {
  std::vector<Record> records;
  std::string field;
  Record rec;
  std::size_t line = 1;
  rec.line = line;
  bool in_quotes = false;
  bool field_started = false;
  bool after_quote = false;
  char c;

  auto end_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
    after_quote = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(rec.fields.size() == 1 && rec.fields[0].empty())) records.push_back(std::move(rec));
    rec = Record{};
  };

  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == ',') {
      end_field();
    } else if (c == '\r' && in.peek() == '\n') {
      continue;
    } else if (c == '\n') {
      end_record();
      ++line;
      rec.line = line;
    } else if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else {
      if (after_quote) throw ParseError("unexpected character after closing quote", line);
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", rec.line);
  if (field_started || !rec.fields.empty()) end_record();
  return records;
}

inline std::string escape(std::string_view value) {
  const bool needs_quotes = value.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

}  // namespace biasdoor::csv
