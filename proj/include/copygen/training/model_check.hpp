// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <copygen/core/gradcheck.hpp>
#include <copygen/training/loss.hpp>

namespace copygen {

struct ModelCheckOptions {
  std::size_t hidden_dim = 8;
  std::size_t word_vocab = 20;
  std::size_t source_length = 5;
  std::size_t target_length = 3;
  double epsilon = 1e-4;
  /// Parameters are redrawn from U(-scale, scale) so gradients sit above finite-difference round-off.
  double parameter_scale = 1.0;
  std::optional<std::size_t> probes_per_tensor;  ///< nullopt: every coordinate
  std::uint64_t seed = 0;
  std::optional<std::pair<std::string, double>> fault;
};

inline ModelConfig toy_model_config(Task task, std::size_t hidden, std::size_t vocab) {
  ModelConfig c;
  c.task = task;
  c.word_vocab = vocab;
  c.word_dim = 6;
  c.hidden_dim = hidden;
  c.dropout_p = 0.0;
  c.freeze_word_embeddings = false;
  if (task == Task::table2text) {
    c.field_vocab = 8;
    c.field_dim = 3;
    c.pos_dim = 2;
    c.encoder_layers = 1;
  } else {
    c.field_vocab = 0;
    c.field_dim = 0;
    c.pos_dim = 0;
    c.encoder_layers = 2;
  }
  return c;
}

/// Random (source, target) pair over "w<k>" tokens; roughly one in five is out of vocabulary.
inline Example toy_example(const ModelConfig& cfg, const Vocabulary& words, std::size_t src_len, std::size_t tgt_len,
                           std::mt19937_64& rng) {
  const std::size_t span = words.size() + words.size() / 4 + 1;
  auto draw = [&] { return "w" + std::to_string(kNumReserved + rng() % (span - kNumReserved)); };
  Example ex;
  for (std::size_t i = 0; i < src_len; ++i) ex.source_words.push_back(draw());
  for (std::size_t i = 0; i < tgt_len; ++i) ex.target_words.push_back(draw());
  if (cfg.task == Task::table2text) {
    TableSourceSequence s;
    for (const auto& w : ex.source_words)
      s.tokens.push_back({words.id(w), static_cast<int>(kNumReserved + rng() % (cfg.field_vocab - kNumReserved)),
                          1 + static_cast<int>(rng() % kMaxPosition), 1 + static_cast<int>(rng() % kMaxPosition)});
    ex.source = s;
  } else {
    QGSourceSequence s;
    for (const auto& w : ex.source_words) s.tokens.push_back({words.id(w), static_cast<int>(rng() % 2)});
    ex.source = s;
  }
  return ex;
}

/// Finite-difference check of the full sequence loss over every parameter group of a toy model.
inline GradcheckResult check_model_gradients(Task task, const ModelCheckOptions& opts = {}) {
  const ModelConfig cfg = toy_model_config(task, opts.hidden_dim, opts.word_vocab);
  Seq2Seq model(cfg, opts.seed);
  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& [name, t] : model.parameters()) uniform_fill(t, -opts.parameter_scale, opts.parameter_scale, rng);
  std::vector<std::string> toks;
  for (std::size_t k = kNumReserved; k < cfg.word_vocab; ++k) toks.push_back("w" + std::to_string(k));
  const Vocabulary words(toks);
  const Example ex = toy_example(cfg, words, opts.source_length, opts.target_length, rng);
  const GraphLoss loss = [&](Graph& g, const NamedTensors&) { return sequence_loss(g, model, ex, words); };
  GradcheckOptions go;
  go.epsilon = opts.epsilon;
  go.probes_per_tensor = opts.probes_per_tensor;
  go.seed = opts.seed;
  go.fault = opts.fault;
  return finite_difference_check(loss, model.parameters(), go);
}

}  // namespace copygen
