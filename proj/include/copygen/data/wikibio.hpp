// SPDX-License-Identifier: Apache-2.0
/**
 * @file   wikibio.hpp
 * @brief  Infobox records in the WikiBio release layout.
 *
 * A `.box` line holds one infobox as space-separated `field_k:token` items,
 * where k is the 1-based position of the token inside its field:
 *
 *     name_1:bernard name_2:keen institutions_1:university institutions_2:college ...
 *
 * References live in a parallel `.sent` file. When a `.nb` file is given, its
 * i-th line is the number of `.sent` lines belonging to record i and the first
 * of them is the reference; otherwise `.sent` is line-aligned with `.box`.
 */
#pragma once

#include <copygen/data/text.hpp>

#include <charconv>

namespace copygen {

struct InfoboxField {
  std::string name;
  std::vector<std::string> tokens;

  friend bool operator==(const InfoboxField&, const InfoboxField&) = default;
};

struct InfoboxRecord {
  std::vector<InfoboxField> fields;
  std::vector<std::string> reference;

  friend bool operator==(const InfoboxRecord&, const InfoboxRecord&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_, column_;
};

/**
 * Parses one `.box` line. Consecutive items with the same field name and
 * positions 1, 2, ... form one field; a position of 1 starts a new field.
 * `line_no` is only used for error messages.
 */
inline InfoboxRecord parse_wikibio_record(std::string_view box_line, std::string_view reference = {},
                                          std::size_t line_no = 1, bool lowercase = true) {
  InfoboxRecord rec;
  std::size_t i = 0;
  bool any = false;
  while (i < box_line.size()) {
    while (i < box_line.size() && std::isspace(static_cast<unsigned char>(box_line[i]))) ++i;
    if (i >= box_line.size()) break;
    std::size_t j = i;
    while (j < box_line.size() && !std::isspace(static_cast<unsigned char>(box_line[j]))) ++j;
    const std::string_view item = box_line.substr(i, j - i);
    const std::size_t column = i + 1;
    i = j;
    any = true;

    const auto colon = item.find(':');
    if (colon == std::string_view::npos)
      throw ParseError("field token '" + std::string(item) + "' has no ':' separator", line_no, column);
    const std::string_view key = item.substr(0, colon);
    const std::string_view value = item.substr(colon + 1);
    if (value.empty()) throw ParseError("empty value in '" + std::string(item) + "'", line_no, column);
    const auto us = key.rfind('_');
    if (us == std::string_view::npos || us == 0 || us + 1 == key.size())
      throw ParseError("field key '" + std::string(key) + "' lacks a name_position form", line_no, column);
    std::size_t pos = 0;
    const auto digits = key.substr(us + 1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), pos);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || pos == 0)
      throw ParseError("bad field position in '" + std::string(key) + "'", line_no, column);
    std::string name(key.substr(0, us));
    std::string tok(value);
    if (lowercase) tok = to_lower(std::move(tok));

    if (pos == 1 || rec.fields.empty() || rec.fields.back().name != name) {
      if (pos != 1)
        throw ParseError("field '" + name + "' starts at position " + std::to_string(pos), line_no, column);
      rec.fields.push_back({std::move(name), {}});
    } else if (pos != rec.fields.back().tokens.size() + 1) {
      throw ParseError("field '" + name + "' position " + std::to_string(pos) + " out of sequence", line_no, column);
    }
    rec.fields.back().tokens.push_back(std::move(tok));
  }
  if (!any) throw ParseError("empty infobox", line_no, 1);
  for (auto& t : split_whitespace(reference)) rec.reference.push_back(lowercase ? to_lower(t) : t);
  return rec;
}

/// Inverse of parse_wikibio_record for the `.box` part.
inline std::string serialize_wikibio_box(const InfoboxRecord& rec) {
  std::string out;
  for (const auto& f : rec.fields)
    for (std::size_t k = 0; k < f.tokens.size(); ++k) {
      if (!out.empty()) out += ' ';
      out += f.name + '_' + std::to_string(k + 1) + ':' + f.tokens[k];
    }
  return out;
}

/// Reads a `.box` file with its references (`sent_path` may be empty for unlabeled input).
inline std::vector<InfoboxRecord> read_wikibio(const std::string& box_path, const std::string& sent_path = {},
                                               const std::string& nb_path = {}, bool lowercase = true) {
  const auto boxes = read_lines(box_path);
  std::vector<std::string> refs;
  if (!sent_path.empty()) {
    const auto sents = read_lines(sent_path);
    if (!nb_path.empty()) {
      std::size_t cursor = 0;
      for (const auto& nb : read_lines(nb_path)) {
        const std::size_t n = std::stoul(nb);
        if (cursor >= sents.size()) throw FileError("'" + nb_path + "' counts exceed '" + sent_path + "'");
        refs.push_back(sents[cursor]);
        cursor += n;
      }
    } else {
      refs = sents;
    }
    if (refs.size() != boxes.size())
      throw FileError("'" + box_path + "' has " + std::to_string(boxes.size()) + " records but " +
                      std::to_string(refs.size()) + " references");
  }
  std::vector<InfoboxRecord> out;
  out.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i)
    out.push_back(parse_wikibio_record(boxes[i], refs.empty() ? std::string_view{} : refs[i], i + 1, lowercase));
  return out;
}

}  // namespace copygen
