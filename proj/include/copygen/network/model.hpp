// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  Attention-based encoder-decoder with a copy gate, shared by both tasks.
 *
 * Encoder: (stacked) BiLSTM over feature-concatenated token embeddings.
 *   table2text: x_t = [word; field; pos_from_start; pos_from_end]
 *   qg:         x_t = [word; answer_bit]
 * Decoder, per step, with input feeding:
 *   (h, c)   = LSTM([embed(y_prev); context_prev], (h, c))
 *   alpha    = softmax_i( v . tanh(W_key H_i + W_query h + b) )
 *   context  = sum_i alpha_i H_i
 *   logits   = W_out [h; context] + b_out
 *   p_gen    = sigmoid(w_gate . [context; h; embed(y_prev)] + b_gate)
 *   P(w)     = p_gen softmax(logits)_w + (1 - p_gen) sum_{i: src_i = w} alpha_i
 * over the vocabulary extended with the source's out-of-vocabulary words.
 *
 * Only embed_inputs() differs between the tasks.
 */
#pragma once

#include <copygen/core/ops.hpp>
#include <copygen/data/features.hpp>
#include <copygen/network/config.hpp>

#include <cstdint>
#include <random>

namespace copygen {

/// Dropout source for a training forward pass. A null pointer means inference.
struct DropoutContext {
  double p = 0.0;
  std::mt19937_64* rng = nullptr;

  Expr apply(Expr x) const { return (rng && p > 0.0) ? dropout(x, p, *rng) : x; }
};

struct DecoderState {
  Expr h;
  Expr c;
  Expr context;  ///< attention context of the previous step (zeros initially)
  int prev_token = kSos;
};

struct EncodedSource {
  Expr states;  ///< T x 2*hidden, row t = [forward_t; backward_t]
  Expr keys;    ///< T x attention_dim, W_key applied to every row of `states`
  DecoderState init;
  std::vector<int> ext_ids;  ///< extended-vocabulary id per source position
  std::size_t ext_size = 0;
  std::vector<bool> mask;  ///< false marks padding rows

  std::size_t length() const { return ext_ids.size(); }
};

struct AttentionResult {
  Expr alpha;
  Expr context;
};

struct DecoderOutput {
  DecoderState state;
  Expr logits;
  Expr alpha;
  Expr p_gen;  ///< shape [1]
};

class Seq2Seq {
 public:
  Seq2Seq() = default;

  /// Fresh model: Xavier-uniform weights, zero biases, forget-gate bias 1, embeddings uniform(-0.1, 0.1).
  Seq2Seq(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    for (const auto& spec : parameter_specs()) {
      Tensor t(spec.shape);
      switch (spec.init) {
        case Init::embedding: uniform_fill(t, -0.1, 0.1, rng); break;
        case Init::xavier: xavier_uniform(t, rng); break;
        case Init::zeros: break;
        case Init::lstm_bias:
          for (std::size_t j = cfg_.hidden_dim; j < 2 * cfg_.hidden_dim; ++j) t[j] = 1.0;
          break;
      }
      t.set_requires_grad(spec.trainable);
      params_.emplace(spec.name, std::move(t));
    }
  }

  /// Model over existing parameters; names and shapes must match the config.
  Seq2Seq(ModelConfig cfg, NamedTensors params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    const auto specs = parameter_specs();
    if (specs.size() != params_.size())
      throw DimensionError("model: expected " + std::to_string(specs.size()) + " parameters, got " +
                           std::to_string(params_.size()));
    for (const auto& spec : specs) {
      auto it = params_.find(spec.name);
      if (it == params_.end()) throw DimensionError("model: missing parameter '" + spec.name + "'");
      if (it->second.shape() != spec.shape)
        throw DimensionError("model: parameter '" + spec.name + "' has shape " + shape_string(it->second.shape()) +
                             ", expected " + shape_string(spec.shape));
      it->second.set_requires_grad(spec.trainable);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  NamedTensors& parameters() { return params_; }
  const NamedTensors& parameters() const { return params_; }
  const Tensor& parameter(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("model: no parameter '" + name + "'");
    return it->second;
  }
  Tensor& parameter(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("model: no parameter '" + name + "'");
    return it->second;
  }

  /// Replaces the word embedding table (e.g. with pretrained vectors).
  void set_word_embeddings(Tensor table) {
    Tensor& dst = parameter("embed.word");
    if (table.shape() != dst.shape())
      throw DimensionError("model: embedding table " + shape_string(table.shape()) + " vs " + shape_string(dst.shape()));
    table.set_requires_grad(!cfg_.freeze_word_embeddings);
    dst = std::move(table);
  }

  // ---- inputs -------------------------------------------------------------

  /// T x (word_dim + field_dim + 2 pos_dim); row t = [word; field; p+; p-].
  Expr embed_table_inputs(Graph& g, const TableSourceSequence& seq) const {
    std::vector<int> w, f, pp, pm;
    for (const auto& t : seq.tokens) {
      w.push_back(t.word_id);
      f.push_back(t.field_id);
      pp.push_back(t.p_plus - 1);
      pm.push_back(t.p_minus - 1);
    }
    if (w.empty()) throw DimensionError("embed_table_inputs: empty source");
    return concat_cols({embed(g, "embed.word", w), embed(g, "embed.field", f), embed(g, "embed.pos_plus", pp),
                        embed(g, "embed.pos_minus", pm)});
  }

  /// T x (word_dim + 1); row t = [word; answer_bit].
  Expr embed_qg_inputs(Graph& g, const QGSourceSequence& seq) const {
    std::vector<int> w;
    Tensor bits(Shape{seq.tokens.size(), 1});
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      w.push_back(seq.tokens[i].word_id);
      bits[i] = static_cast<double>(seq.tokens[i].answer_bit);
    }
    if (w.empty()) throw DimensionError("embed_qg_inputs: empty source");
    return concat_cols({embed(g, "embed.word", w), g.constant(std::move(bits))});
  }

  Expr embed_inputs(Graph& g, const SourceSequence& src) const {
    if (const auto* t = std::get_if<TableSourceSequence>(&src)) {
      if (cfg_.task != Task::table2text) throw std::invalid_argument("model: table source given to a qg model");
      return embed_table_inputs(g, *t);
    }
    if (cfg_.task != Task::qg) throw std::invalid_argument("model: qg source given to a table2text model");
    return embed_qg_inputs(g, std::get<QGSourceSequence>(src));
  }

  // ---- encoder ------------------------------------------------------------

  /// Stacked BiLSTM over the rows of `x`; copy-map fields are left empty.
  EncodedSource bilstm_encode(Graph& g, Expr x, const DropoutContext& drop = {}) const {
    const std::size_t steps = x.value().rows();
    if (x.value().rank() != 2 || steps == 0) throw DimensionError("bilstm_encode: empty input");
    const std::size_t h = cfg_.hidden_dim;
    Expr layer_in = drop.apply(x);
    Expr hf_last, cf_last, hb_first, cb_first;
    Expr states;
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      if (l > 0) layer_in = drop.apply(layer_in);
      std::vector<Expr> rows;
      rows.reserve(steps);
      for (std::size_t t = 0; t < steps; ++t) rows.push_back(row(layer_in, t));
      const std::string prefix = "encoder.l" + std::to_string(l);
      std::vector<Expr> fwd(steps), bwd(steps);
      Expr hs = zeros(g, h), cs = zeros(g, h);
      for (std::size_t t = 0; t < steps; ++t) {
        std::tie(hs, cs) = lstm_cell(g, prefix + ".fwd", rows[t], hs, cs);
        fwd[t] = hs;
      }
      hf_last = hs;
      cf_last = cs;
      hs = zeros(g, h);
      cs = zeros(g, h);
      for (std::size_t t = steps; t-- > 0;) {
        std::tie(hs, cs) = lstm_cell(g, prefix + ".bwd", rows[t], hs, cs);
        bwd[t] = hs;
      }
      hb_first = hs;
      cb_first = cs;
      std::vector<Expr> joined;
      joined.reserve(steps);
      for (std::size_t t = 0; t < steps; ++t) joined.push_back(concat({fwd[t], bwd[t]}));
      states = stack_rows(joined);
      layer_in = states;
    }
    EncodedSource enc;
    enc.states = states;
    enc.keys = matmul(states, param(g, "attention.key"));
    enc.init.h = tanh(linear(concat({hf_last, hb_first}), param(g, "bridge.h.weight"), param(g, "bridge.h.bias")));
    enc.init.c = tanh(linear(concat({cf_last, cb_first}), param(g, "bridge.c.weight"), param(g, "bridge.c.bias")));
    enc.init.context = zeros(g, 2 * h);
    enc.init.prev_token = kSos;
    enc.mask.assign(steps, true);
    return enc;
  }

  /// Embeds and encodes a source, attaching its extended-vocabulary map.
  EncodedSource encode(Graph& g, const SourceSequence& src, const CopyMap& copy,
                       const DropoutContext& drop = {}) const {
    if (copy.ext_ids.size() != source_length(src))
      throw DimensionError("encode: copy map covers " + std::to_string(copy.ext_ids.size()) + " of " +
                           std::to_string(source_length(src)) + " source tokens");
    EncodedSource enc = bilstm_encode(g, embed_inputs(g, src), drop);
    enc.ext_ids = copy.ext_ids;
    enc.ext_size = copy.ext_size();
    return enc;
  }

  // ---- decoder ------------------------------------------------------------

  /// Additive attention of decoder state `s` over the encoder rows.
  AttentionResult attention(Graph& g, Expr s, const EncodedSource& enc) const {
    Expr bias = linear(s, param(g, "attention.query"), param(g, "attention.bias"));
    Expr scores = matmul(tanh(add_bias(enc.keys, bias)), param(g, "attention.score"));
    Expr alpha = softmax(scores, enc.mask);
    return {alpha, matmul(alpha, enc.states)};
  }

  DecoderOutput decoder_step(Graph& g, const DecoderState& state, int y_prev, const EncodedSource& enc,
                             const DropoutContext& drop = {}) const {
    if (y_prev < 0 || static_cast<std::size_t>(y_prev) >= std::max(enc.ext_size, cfg_.word_vocab))
      throw IndexError("decoder_step: token id " + std::to_string(y_prev) + " out of range");
    const int in_vocab = static_cast<std::size_t>(y_prev) < cfg_.word_vocab ? y_prev : kUnk;
    const std::vector<int> id{in_vocab};
    Expr emb = row(embed(g, "embed.word", id), 0);
    auto [h, c] = lstm_cell(g, "decoder", concat({emb, state.context}), state.h, state.c);
    auto [alpha, context] = attention(g, h, enc);
    Expr readout_in = drop.apply(concat({h, context}));
    Expr logits = linear(readout_in, param(g, "readout.weight"), param(g, "readout.bias"));
    Expr p_gen = sigmoid(linear(concat({context, h, emb}), param(g, "copy_gate.weight"), param(g, "copy_gate.bias")));
    return {DecoderState{h, c, context, y_prev}, logits, alpha, p_gen};
  }

  /**
   * Mixture of the vocabulary softmax and the attention-weighted copy
   * distribution over the extended vocabulary. `p_gen` is a size-1 expression.
   */
  static Expr output_distribution(Expr logits, Expr alpha, Expr p_gen, std::span<const int> ext_ids,
                                  std::size_t ext_size) {
    Expr generate = scale_by(pad(softmax(logits), ext_size), p_gen);
    Expr copy = scale_by(scatter_add(alpha, ext_ids, ext_size), one_minus(p_gen));
    return add(generate, copy);
  }

  Expr output_distribution(const DecoderOutput& out, const EncodedSource& enc) const {
    return output_distribution(out.logits, out.alpha, out.p_gen, enc.ext_ids, std::max(enc.ext_size, cfg_.word_vocab));
  }

  /// Binds a named parameter into `g`.
  Expr param(Graph& g, const std::string& name) const { return g.variable(name, parameter(name)); }

 private:
  enum class Init { embedding, xavier, zeros, lstm_bias };
  struct ParamSpec {
    std::string name;
    Shape shape;
    Init init;
    bool trainable = true;
  };

  std::vector<ParamSpec> parameter_specs() const {
    const std::size_t h = cfg_.hidden_dim, a = cfg_.attn_dim(), e = cfg_.word_dim;
    std::vector<ParamSpec> s;
    s.push_back({"embed.word", {cfg_.word_vocab, e}, Init::embedding, !cfg_.freeze_word_embeddings});
    if (cfg_.task == Task::table2text) {
      s.push_back({"embed.field", {cfg_.field_vocab, cfg_.field_dim}, Init::embedding});
      s.push_back({"embed.pos_plus", {static_cast<std::size_t>(kMaxPosition), cfg_.pos_dim}, Init::embedding});
      s.push_back({"embed.pos_minus", {static_cast<std::size_t>(kMaxPosition), cfg_.pos_dim}, Init::embedding});
    }
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      const std::size_t in = l == 0 ? cfg_.input_dim() : 2 * h;
      for (const char* dir : {".fwd", ".bwd"}) {
        const std::string p = "encoder.l" + std::to_string(l) + dir;
        s.push_back({p + ".weight", {in + h, 4 * h}, Init::xavier});
        s.push_back({p + ".bias", {4 * h}, Init::lstm_bias});
      }
    }
    s.push_back({"bridge.h.weight", {2 * h, h}, Init::xavier});
    s.push_back({"bridge.h.bias", {h}, Init::zeros});
    s.push_back({"bridge.c.weight", {2 * h, h}, Init::xavier});
    s.push_back({"bridge.c.bias", {h}, Init::zeros});
    s.push_back({"decoder.weight", {e + 2 * h + h, 4 * h}, Init::xavier});
    s.push_back({"decoder.bias", {4 * h}, Init::lstm_bias});
    s.push_back({"attention.key", {2 * h, a}, Init::xavier});
    s.push_back({"attention.query", {h, a}, Init::xavier});
    s.push_back({"attention.bias", {a}, Init::zeros});
    s.push_back({"attention.score", {a}, Init::xavier});
    s.push_back({"readout.weight", {3 * h, cfg_.word_vocab}, Init::xavier});
    s.push_back({"readout.bias", {cfg_.word_vocab}, Init::zeros});
    s.push_back({"copy_gate.weight", {2 * h + h + e, 1}, Init::xavier});
    s.push_back({"copy_gate.bias", {1}, Init::zeros});
    return s;
  }

  Expr embed(Graph& g, const std::string& name, std::span<const int> ids) const {
    return lookup(g, name, parameter(name), ids);
  }

  static Expr zeros(Graph& g, std::size_t n) { return g.constant(Tensor(Shape{n})); }

  /// Gate order i, f, g, o.
  std::pair<Expr, Expr> lstm_cell(Graph& g, const std::string& prefix, Expr x, Expr h, Expr c) const {
    const std::size_t n = cfg_.hidden_dim;
    Expr z = linear(concat({x, h}), param(g, prefix + ".weight"), param(g, prefix + ".bias"));
    Expr i = sigmoid(slice(z, 0, n));
    Expr f = sigmoid(slice(z, n, n));
    Expr cand = tanh(slice(z, 2 * n, n));
    Expr o = sigmoid(slice(z, 3 * n, n));
    Expr c_next = f * c + i * cand;
    return {o * tanh(c_next), c_next};
  }

  ModelConfig cfg_;
  NamedTensors params_;
};

}  // namespace copygen
