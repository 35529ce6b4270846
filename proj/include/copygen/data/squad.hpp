// SPDX-License-Identifier: Apache-2.0
/**
 * @file   squad.hpp
 * @brief  (passage, answer span, question) triples from SQuAD v1.1 JSON.
 */
#pragma once

#include <copygen/data/text.hpp>

#include <json.hpp>

#include <iostream>

namespace copygen {

struct QGExample {
  std::vector<std::string> passage_tokens;
  std::size_t answer_start = 0;  ///< first answer token, inclusive
  std::size_t answer_end = 0;    ///< last answer token, inclusive
  std::vector<std::string> question_tokens;

  friend bool operator==(const QGExample&, const QGExample&) = default;
};

/// Raised when an answer span does not fit the passage.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void validate(const QGExample& ex) {
  if (ex.answer_start > ex.answer_end || ex.answer_end >= ex.passage_tokens.size())
    throw ValidationError("answer span (" + std::to_string(ex.answer_start) + ", " + std::to_string(ex.answer_end) +
                          ") invalid for passage of " + std::to_string(ex.passage_tokens.size()) + " tokens");
}

struct OffsetToken {
  std::string text;
  std::size_t begin = 0;  ///< byte offset, inclusive
  std::size_t end = 0;    ///< byte offset, exclusive
};

/// Whitespace tokenization that also splits off ASCII punctuation, keeping byte offsets.
inline std::vector<OffsetToken> tokenize_with_offsets(std::string_view text, bool lowercase = true) {
  static constexpr std::string_view kPunct = ".,;:!?\"'()[]{}";
  std::vector<OffsetToken> out;
  std::size_t i = 0;
  auto emit = [&](std::size_t b, std::size_t e) {
    std::string t(text.substr(b, e - b));
    out.push_back({lowercase ? to_lower(std::move(t)) : std::move(t), b, e});
  };
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (kPunct.find(static_cast<char>(c)) != std::string_view::npos) {
      emit(i, i + 1);
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) &&
             kPunct.find(text[j]) == std::string_view::npos)
        ++j;
      emit(i, j);
      i = j;
    }
  }
  return out;
}

struct SquadParseResult {
  std::vector<QGExample> examples;
  std::size_t skipped = 0;    ///< answers starting beyond the passage
  std::size_t realigned = 0;  ///< answers not on token boundaries, widened to covering tokens
};

/**
 * Parses SQuAD v1.1 JSON: either a whole file ({"data": [...]}) or a single
 * article ({"paragraphs": [...]}). Each (question, answer) pair becomes one
 * example; character offsets become the minimal covering token span. Only the
 * first answer of each question is used.
 */
inline SquadParseResult parse_squad(std::string_view json_text, bool lowercase = true,
                                    std::ostream* warnings = &std::cerr) {
  SquadParseResult res;
  if (split_whitespace(json_text).empty()) return res;
  const auto doc = nlohmann::json::parse(json_text);
  std::vector<const nlohmann::json*> articles;
  if (doc.contains("data")) {
    for (const auto& a : doc.at("data")) articles.push_back(&a);
  } else {
    articles.push_back(&doc);
  }
  for (const auto* article : articles) {
    for (const auto& para : article->at("paragraphs")) {
      const std::string context = para.at("context").get<std::string>();
      const auto toks = tokenize_with_offsets(context, lowercase);
      for (const auto& qa : para.at("qas")) {
        const auto& answers = qa.at("answers");
        if (answers.empty()) continue;
        const auto& ans = answers.front();
        const std::string text = ans.at("text").get<std::string>();
        const std::size_t start = ans.at("answer_start").get<std::size_t>();
        const std::size_t stop = start + std::max<std::size_t>(text.size(), 1);
        if (start >= context.size() || toks.empty()) {
          ++res.skipped;
          if (warnings)
            *warnings << "warning: answer_start " << start << " beyond passage of " << context.size()
                      << " characters; skipped\n";
          continue;
        }
        std::size_t first = toks.size(), last = 0;
        for (std::size_t t = 0; t < toks.size(); ++t) {
          if (toks[t].end > start && toks[t].begin < stop) {
            first = std::min(first, t);
            last = t;
          }
        }
        if (first == toks.size()) {
          ++res.skipped;
          if (warnings) *warnings << "warning: answer at " << start << " covers no token; skipped\n";
          continue;
        }
        if (toks[first].begin != start || toks[last].end != std::min(stop, context.size())) {
          ++res.realigned;
          if (warnings)
            *warnings << "warning: answer '" << text << "' not on token boundaries; widened to tokens " << first
                      << ".." << last << "\n";
        }
        QGExample ex;
        for (const auto& t : toks) ex.passage_tokens.push_back(t.text);
        ex.answer_start = first;
        ex.answer_end = last;
        for (auto& t : tokenize_with_offsets(qa.at("question").get<std::string>(), lowercase))
          ex.question_tokens.push_back(std::move(t.text));
        res.examples.push_back(std::move(ex));
      }
    }
  }
  return res;
}

inline SquadParseResult read_squad(const std::string& path, bool lowercase = true,
                                   std::ostream* warnings = &std::cerr) {
  return parse_squad(read_file(path), lowercase, warnings);
}

}  // namespace copygen
