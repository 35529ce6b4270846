// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <copygen/network/model.hpp>

namespace copygen {

struct LossStats {
  std::size_t tokens = 0;
  std::size_t unk_targets = 0;  ///< gold tokens in neither the vocabulary nor the source
};

/// Gold ids over the extended vocabulary, EOS appended.
inline std::vector<int> target_ids(const Example& ex, const CopyMap& copy, const Vocabulary& words,
                                   LossStats* stats = nullptr) {
  std::vector<int> ids;
  ids.reserve(ex.target_words.size() + 1);
  for (const auto& w : ex.target_words) {
    ids.push_back(copy.target_id(w, words));
    if (stats && ids.back() == kUnk) ++stats->unk_targets;
  }
  ids.push_back(kEos);
  if (stats) stats->tokens += ids.size();
  return ids;
}

/// Teacher-forced sum over target steps of -log P(gold).
inline Expr sequence_nll(Graph& g, const Seq2Seq& model, const Example& ex, const Vocabulary& words,
                         const DropoutContext& drop = {}, LossStats* stats = nullptr) {
  const CopyMap copy(ex.source_words, words);
  const EncodedSource enc = model.encode(g, ex.source, copy, drop);
  const auto gold = target_ids(ex, copy, words, stats);
  DecoderState state = enc.init;
  int prev = kSos;
  std::vector<Expr> terms;
  terms.reserve(gold.size());
  for (int y : gold) {
    const DecoderOutput out = model.decoder_step(g, state, prev, enc, drop);
    terms.push_back(log(pick(model.output_distribution(out, enc), static_cast<std::size_t>(y))));
    state = out.state;
    prev = y;
  }
  return neg(add_n(terms));
}

/// Mean per-token cross-entropy of one sequence.
inline Expr sequence_loss(Graph& g, const Seq2Seq& model, const Example& ex, const Vocabulary& words,
                          const DropoutContext& drop = {}, LossStats* stats = nullptr) {
  return scale(sequence_nll(g, model, ex, words, drop, stats), 1.0 / static_cast<double>(ex.target_words.size() + 1));
}

/// Mean per-token loss over a dataset without recording gradients.
inline double evaluate_loss(const Seq2Seq& model, const std::vector<Example>& data, const Vocabulary& words) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : data) {
    Graph g(false);
    total += sequence_nll(g, model, ex, words).value().item();
    tokens += ex.target_words.size() + 1;
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

}  // namespace copygen
