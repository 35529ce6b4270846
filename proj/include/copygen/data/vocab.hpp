// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace copygen {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kSos = 2;
inline constexpr int kEos = 3;
inline constexpr int kNumReserved = 4;

/**
 * Token <-> id map with PAD, UNK, SOS, EOS at ids 0..3.
 *
 * Built from a token stream by descending frequency, ties broken
 * lexicographically, keeping at most `max_size` non-reserved entries.
 */
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// Reserved tokens followed by `tokens` in order. Duplicates are rejected.
  explicit Vocabulary(const std::vector<std::string>& tokens) {
    for (const char* r : {"<pad>", "<unk>", "<s>", "</s>"}) append(r);
    for (const auto& t : tokens) {
      if (index_.count(t)) throw std::invalid_argument("vocabulary: duplicate token '" + t + "'");
      append(t);
    }
  }

  template <class Range>
  static Vocabulary build(const Range& token_stream, std::size_t max_size) {
    if (max_size < 1) throw std::invalid_argument("vocabulary: max_size must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& tok : token_stream) ++counts[tok];
    for (const char* r : {"<pad>", "<unk>", "<s>", "</s>"}) counts.erase(r);
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > max_size) ranked.resize(max_size);
    std::vector<std::string> tokens;
    tokens.reserve(ranked.size());
    for (auto& [tok, _] : ranked) tokens.push_back(tok);
    return Vocabulary(tokens);
  }

  std::size_t size() const { return tokens_.size(); }

  /// Id of `token`, or kUnk.
  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void append(const std::string& t) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace copygen
