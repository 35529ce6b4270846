// SPDX-License-Identifier: Apache-2.0
/**
 * @file   features.hpp
 * @brief  Feature-annotated source sequences for both tasks, and the
 *         per-source extended vocabulary used by the copy mechanism.
 */
#pragma once

#include <copygen/data/squad.hpp>
#include <copygen/data/vocab.hpp>
#include <copygen/data/wikibio.hpp>

#include <variant>

namespace copygen {

inline constexpr int kMaxPosition = 30;

/// One source token of an infobox: word, field, position from field start and end (both 1-based, clipped).
struct TableToken {
  int word_id = kUnk;
  int field_id = kUnk;
  int p_plus = 1;
  int p_minus = 1;

  friend bool operator==(const TableToken&, const TableToken&) = default;
};

struct TableSourceSequence {
  std::vector<TableToken> tokens;
};

struct QGToken {
  int word_id = kUnk;
  int answer_bit = 0;

  friend bool operator==(const QGToken&, const QGToken&) = default;
};

struct QGSourceSequence {
  std::vector<QGToken> tokens;
};

using SourceSequence = std::variant<TableSourceSequence, QGSourceSequence>;

inline std::size_t source_length(const SourceSequence& s) {
  return std::visit([](const auto& seq) { return seq.tokens.size(); }, s);
}

inline TableSourceSequence encode_table_source(const InfoboxRecord& rec, const Vocabulary& words,
                                               const Vocabulary& fields) {
  TableSourceSequence seq;
  for (const auto& f : rec.fields) {
    const int fid = fields.id(f.name);
    const int len = static_cast<int>(f.tokens.size());
    for (int k = 0; k < len; ++k) {
      seq.tokens.push_back({words.id(f.tokens[static_cast<std::size_t>(k)]), fid, std::min(k + 1, kMaxPosition),
                            std::min(len - k, kMaxPosition)});
    }
  }
  return seq;
}

inline QGSourceSequence encode_qg_source(const QGExample& ex, const Vocabulary& words) {
  validate(ex);
  QGSourceSequence seq;
  for (std::size_t i = 0; i < ex.passage_tokens.size(); ++i)
    seq.tokens.push_back(
        {words.id(ex.passage_tokens[i]), (i >= ex.answer_start && i <= ex.answer_end) ? 1 : 0});
  return seq;
}

/// Surface tokens of an infobox source, in encoder order.
inline std::vector<std::string> source_words(const InfoboxRecord& rec) {
  std::vector<std::string> out;
  for (const auto& f : rec.fields) out.insert(out.end(), f.tokens.begin(), f.tokens.end());
  return out;
}

/**
 * Extended vocabulary of one source: the word vocabulary followed by the
 * source's out-of-vocabulary words in order of first appearance.
 */
struct CopyMap {
  std::vector<int> ext_ids;            ///< per source position
  std::vector<std::string> oov_words;  ///< extended id = base_size + index
  std::size_t base_size = 0;

  CopyMap() = default;
  CopyMap(const std::vector<std::string>& source, const Vocabulary& words) : base_size(words.size()) {
    for (const auto& w : source) {
      if (words.contains(w)) {
        ext_ids.push_back(words.id(w));
        continue;
      }
      auto it = std::find(oov_words.begin(), oov_words.end(), w);
      if (it == oov_words.end()) {
        oov_words.push_back(w);
        it = oov_words.end() - 1;
      }
      ext_ids.push_back(static_cast<int>(base_size + static_cast<std::size_t>(it - oov_words.begin())));
    }
  }

  std::size_t ext_size() const { return base_size + oov_words.size(); }

  /// Extended id of a target word: vocab id, else source-OOV id, else UNK.
  int target_id(const std::string& w, const Vocabulary& words) const {
    if (words.contains(w)) return words.id(w);
    auto it = std::find(oov_words.begin(), oov_words.end(), w);
    if (it != oov_words.end()) return static_cast<int>(base_size + static_cast<std::size_t>(it - oov_words.begin()));
    return kUnk;
  }

  std::string word(int ext_id, const Vocabulary& words) const {
    if (ext_id < 0) throw std::out_of_range("copy map: negative id");
    const auto id = static_cast<std::size_t>(ext_id);
    if (id < base_size) return words.token(ext_id);
    if (id - base_size >= oov_words.size())
      throw std::out_of_range("copy map: extended id " + std::to_string(ext_id) + " out of range");
    return oov_words[id - base_size];
  }
};

/// A training / evaluation pair ready for the network.
struct Example {
  SourceSequence source;
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;
};

inline Example make_table_example(const InfoboxRecord& rec, const Vocabulary& words, const Vocabulary& fields) {
  return {encode_table_source(rec, words, fields), source_words(rec), rec.reference};
}

inline Example make_qg_example(const QGExample& ex, const Vocabulary& words) {
  return {encode_qg_source(ex, words), ex.passage_tokens, ex.question_tokens};
}

}  // namespace copygen
