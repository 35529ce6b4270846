// SPDX-License-Identifier: Apache-2.0
// Small configurations and random inputs shared by the unit and acceptance suites.
#pragma once

#include <copygen/network/model.hpp>

#include <random>

namespace copygen::testing {

inline ModelConfig toy_config(Task task, std::size_t hidden = 8, std::size_t vocab = 20) {
  ModelConfig c;
  c.task = task;
  c.word_vocab = vocab;
  c.field_vocab = task == Task::table2text ? 8 : 0;
  c.word_dim = 6;
  c.field_dim = task == Task::table2text ? 3 : 0;
  c.pos_dim = task == Task::table2text ? 2 : 0;
  c.hidden_dim = hidden;
  c.encoder_layers = task == Task::qg ? 2 : 1;
  c.freeze_word_embeddings = false;
  return c;
}

/// Random example over words "w0".."w{V+3}"; ids agree with toy_vocabulary(V), the rest are OOV.
inline Example random_example(const ModelConfig& cfg, std::size_t len, std::size_t target_len, std::mt19937_64& rng) {
  Example ex;
  auto word = [&] { return "w" + std::to_string(rng() % (cfg.word_vocab + 4)); };
  for (std::size_t i = 0; i < len; ++i) ex.source_words.push_back(word());
  for (std::size_t i = 0; i < target_len; ++i) ex.target_words.push_back(word());
  auto id = [&](const std::string& w) {
    const int n = std::stoi(w.substr(1));
    return n >= kNumReserved && n < static_cast<int>(cfg.word_vocab) ? n : kUnk;
  };
  if (cfg.task == Task::table2text) {
    TableSourceSequence s;
    for (std::size_t i = 0; i < len; ++i)
      s.tokens.push_back({id(ex.source_words[i]), static_cast<int>(rng() % cfg.field_vocab),
                          1 + static_cast<int>(rng() % kMaxPosition), 1 + static_cast<int>(rng() % kMaxPosition)});
    ex.source = s;
  } else {
    QGSourceSequence s;
    for (std::size_t i = 0; i < len; ++i) s.tokens.push_back({id(ex.source_words[i]), static_cast<int>(rng() % 2)});
    ex.source = s;
  }
  return ex;
}

/// "w<k>" has id k for 4 <= k < size.
inline Vocabulary toy_vocabulary(std::size_t size) {
  std::vector<std::string> t;
  for (std::size_t k = 4; k < size; ++k) t.push_back("w" + std::to_string(k));
  return Vocabulary(t);
}

}  // namespace copygen::testing
