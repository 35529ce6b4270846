// SPDX-License-Identifier: Apache-2.0
/**
 * @file   decode.hpp
 * @brief  Greedy and beam-search generation over any step-wise model, plus
 *         attention-based replacement of unknown output tokens.
 */
#pragma once

#include <copygen/network/model.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <memory>

namespace copygen {

enum class DecodeMode { greedy, beam };
enum class LengthPenalty { power, gnmt };

inline std::string to_string(DecodeMode m) { return m == DecodeMode::greedy ? "greedy" : "beam"; }
inline std::string to_string(LengthPenalty p) { return p == LengthPenalty::power ? "power" : "gnmt"; }

inline DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "greedy") return DecodeMode::greedy;
  if (s == "beam") return DecodeMode::beam;
  throw std::invalid_argument("unknown decode mode '" + s + "' (expected greedy or beam)");
}

inline LengthPenalty parse_length_penalty(const std::string& s) {
  if (s == "power") return LengthPenalty::power;
  if (s == "gnmt") return LengthPenalty::gnmt;
  throw std::invalid_argument("unknown length penalty '" + s + "' (expected power or gnmt)");
}

struct DecodeConfig {
  DecodeMode mode = DecodeMode::greedy;
  std::size_t beam_size = 1;
  double length_penalty_alpha = 0.0;
  LengthPenalty penalty = LengthPenalty::power;
  std::size_t max_len = 60;
  bool replace_unk = true;

  static DecodeConfig defaults(Task t) {
    DecodeConfig c;
    if (t == Task::qg) {
      c.mode = DecodeMode::beam;
      c.beam_size = 20;
      c.length_penalty_alpha = 1.75;
      c.max_len = 30;
    }
    return c;
  }

  void validate() const {
    if (beam_size < 1) throw std::invalid_argument("decode config: beam_size must be >= 1");
    if (!(length_penalty_alpha >= 0.0)) throw std::invalid_argument("decode config: length penalty must be >= 0");
    if (max_len < 1) throw std::invalid_argument("decode config: max_len must be >= 1");
  }

  friend bool operator==(const DecodeConfig&, const DecodeConfig&) = default;
};

template <class State>
struct StepResult {
  State state;
  std::vector<double> log_probs;  ///< -inf marks tokens that may never be emitted
  std::vector<double> alpha;
};

/// Anything that can start a sequence and extend it by one token.
template <class M>
concept StepModel = requires(const M& m, const typename M::State& s, int tok) {
  { m.initial() } -> std::convertible_to<typename M::State>;
  { m.step(s, tok) } -> std::convertible_to<StepResult<typename M::State>>;
  { m.start_token() } -> std::convertible_to<int>;
  { m.eos_token() } -> std::convertible_to<int>;
};

struct GenerationOutput {
  std::vector<int> tokens;                     ///< EOS excluded
  std::vector<std::vector<double>> attention;  ///< one alpha row per entry of `tokens`
  double log_prob = 0.0;                       ///< includes the EOS step when one was emitted
  double score = 0.0;
  bool ended_with_eos = false;
};

/// Length used by the penalty: emitted tokens including EOS, at least 1.
inline double length_score(double log_prob, std::size_t length, double alpha, LengthPenalty p) {
  const double len = static_cast<double>(std::max<std::size_t>(length, 1));
  if (alpha == 0.0) return log_prob;
  const double denom = p == LengthPenalty::power ? std::pow(len, alpha) : std::pow((5.0 + len) / 6.0, alpha);
  return log_prob / denom;
}

namespace detail {

inline std::size_t argmax_lowest(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace detail

template <StepModel M>
GenerationOutput greedy_decode(const M& model, const DecodeConfig& cfg) {
  GenerationOutput out;
  auto state = model.initial();
  int prev = model.start_token();
  for (std::size_t t = 0; t < cfg.max_len; ++t) {
    auto r = model.step(state, prev);
    const std::size_t y = detail::argmax_lowest(r.log_probs);
    out.log_prob += r.log_probs[y];
    if (static_cast<int>(y) == model.eos_token()) {
      out.ended_with_eos = true;
      break;
    }
    out.tokens.push_back(static_cast<int>(y));
    out.attention.push_back(std::move(r.alpha));
    state = std::move(r.state);
    prev = static_cast<int>(y);
  }
  out.score = length_score(out.log_prob, out.tokens.size() + (out.ended_with_eos ? 1 : 0), cfg.length_penalty_alpha,
                           cfg.penalty);
  return out;
}

template <class State>
struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  State state;
  std::vector<std::vector<double>> attention;
  bool finished = false;
};

/**
 * Beam search. Each step expands every live hypothesis by every token and
 * ranks candidates by log-probability (ties: lexicographically lower token
 * sequence). EOS candidates ranked within the top beam_size are moved to the
 * finished pool; the beam_size best non-EOS candidates continue. Hypotheses
 * reaching max_len are finished as they are. Search stops early once the best
 * finished score beats the optimistic bound of every live hypothesis.
 */
template <StepModel M>
GenerationOutput beam_search(const M& model, const DecodeConfig& cfg) {
  cfg.validate();
  using State = typename M::State;
  using Hyp = Hypothesis<State>;
  const int eos = model.eos_token();
  const std::size_t k = cfg.beam_size;
  auto score_of = [&](const Hyp& h) {
    return length_score(h.log_prob, h.tokens.size(), cfg.length_penalty_alpha, cfg.penalty);
  };
  auto better = [&](const Hyp& a, const Hyp& b) {
    const double sa = score_of(a), sb = score_of(b);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  };

  std::vector<Hyp> beam(1);
  beam[0].state = model.initial();
  std::vector<Hyp> finished;

  struct Candidate {
    std::size_t parent;
    int token;
    double log_prob;
  };

  for (std::size_t t = 0; t < cfg.max_len && !beam.empty(); ++t) {
    std::vector<StepResult<State>> steps;
    steps.reserve(beam.size());
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const int prev = beam[b].tokens.empty() ? model.start_token() : beam[b].tokens.back();
      steps.push_back(model.step(beam[b].state, prev));
      const auto& lp = steps.back().log_probs;
      for (std::size_t y = 0; y < lp.size(); ++y)
        if (std::isfinite(lp[y])) cands.push_back({b, static_cast<int>(y), beam[b].log_prob + lp[y]});
    }
    auto cand_less = [&](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      const auto& ta = beam[a.parent].tokens;
      const auto& tb = beam[b.parent].tokens;
      if (a.parent != b.parent) {
        const auto [ia, ib] = std::mismatch(ta.begin(), ta.end(), tb.begin(), tb.end());
        if (ia != ta.end() && ib != tb.end()) return *ia < *ib;
      }
      return a.token < b.token;
    };
    const std::size_t keep = std::min(cands.size(), 2 * k + 1);
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), cand_less);
    cands.resize(keep);

    std::vector<Hyp> next;
    for (std::size_t r = 0; r < cands.size() && next.size() < k; ++r) {
      const auto& c = cands[r];
      if (c.token == eos && r >= k) continue;
      Hyp h;
      h.tokens = beam[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      h.attention = beam[c.parent].attention;
      h.attention.push_back(steps[c.parent].alpha);
      if (c.token == eos) {
        h.finished = true;
        finished.push_back(std::move(h));
        continue;
      }
      h.state = steps[c.parent].state;
      if (h.tokens.size() >= cfg.max_len) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    beam = std::move(next);

    if (!finished.empty() && !beam.empty()) {
      const Hyp& best = *std::min_element(finished.begin(), finished.end(), better);
      const double best_score = score_of(best);
      bool can_improve = false;
      for (const auto& h : beam) {
        const double bound = length_score(h.log_prob, cfg.max_len, cfg.length_penalty_alpha, cfg.penalty);
        can_improve = can_improve || bound >= best_score;
      }
      if (!can_improve) break;
    }
  }

  GenerationOutput out;
  if (finished.empty()) return out;
  Hyp& best = *std::min_element(finished.begin(), finished.end(), better);
  out.score = score_of(best);
  out.log_prob = best.log_prob;
  out.ended_with_eos = !best.tokens.empty() && best.tokens.back() == eos;
  if (out.ended_with_eos) {
    best.tokens.pop_back();
    best.attention.pop_back();
  }
  out.tokens = std::move(best.tokens);
  out.attention = std::move(best.attention);
  return out;
}

template <StepModel M>
GenerationOutput decode(const M& model, const DecodeConfig& cfg) {
  cfg.validate();
  return cfg.mode == DecodeMode::greedy ? greedy_decode(model, cfg) : beam_search(model, cfg);
}

/// Raised when attention rows do not line up with output tokens or the source.
class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Replaces each `unk` token with the source word under that step's highest attention weight.
inline std::vector<std::string> replace_unk(std::vector<std::string> tokens,
                                            const std::vector<std::vector<double>>& attention,
                                            const std::vector<std::string>& source, const std::string& unk = "<unk>") {
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] != unk) continue;
    if (t >= attention.size())
      throw AlignmentError("replace_unk: no attention row for output position " + std::to_string(t) + " (" +
                           std::to_string(attention.size()) + " rows)");
    const auto& row = attention[t];
    if (row.size() != source.size() || source.empty())
      throw AlignmentError("replace_unk: attention row " + std::to_string(t) + " has " + std::to_string(row.size()) +
                           " weights for a source of " + std::to_string(source.size()) + " tokens");
    tokens[t] = source[detail::argmax_lowest(row)];
  }
  return tokens;
}

/// Step-wise view of a Seq2Seq model over one source. PAD and SOS are never emitted.
class Seq2SeqStepper {
 public:
  struct State {
    DecoderState dec;
  };

  Seq2SeqStepper(const Seq2Seq& model, const SourceSequence& source, const CopyMap& copy)
      : model_(&model), graph_(std::make_unique<Graph>(false)) {
    enc_ = model.encode(*graph_, source, copy);
  }

  State initial() const { return {enc_.init}; }
  int start_token() const { return kSos; }
  int eos_token() const { return kEos; }
  const EncodedSource& encoded() const { return enc_; }

  StepResult<State> step(const State& s, int token) const {
    const auto out = model_->decoder_step(*graph_, s.dec, token, enc_);
    const Tensor& P = model_->output_distribution(out, enc_).value();
    StepResult<State> r;
    r.state = {out.state};
    r.log_probs.resize(P.size());
    for (std::size_t i = 0; i < P.size(); ++i) r.log_probs[i] = std::log(P[i]);
    r.log_probs[kPad] = -std::numeric_limits<double>::infinity();
    r.log_probs[kSos] = -std::numeric_limits<double>::infinity();
    const auto a = out.alpha.value().values();
    r.alpha.assign(a.begin(), a.end());
    return r;
  }

 private:
  const Seq2Seq* model_;
  std::unique_ptr<Graph> graph_;
  EncodedSource enc_;
};

/// Decodes one example to surface words, applying UNK replacement when enabled.
inline std::vector<std::string> generate_words(const Seq2Seq& model, const Example& ex, const Vocabulary& words,
                                               const DecodeConfig& cfg, GenerationOutput* raw = nullptr) {
  const CopyMap copy(ex.source_words, words);
  const Seq2SeqStepper stepper(model, ex.source, copy);
  GenerationOutput out = decode(stepper, cfg);
  std::vector<std::string> text;
  text.reserve(out.tokens.size());
  for (int id : out.tokens) text.push_back(copy.word(id, words));
  if (cfg.replace_unk) text = replace_unk(std::move(text), out.attention, ex.source_words, words.token(kUnk));
  if (raw) *raw = std::move(out);
  return text;
}

}  // namespace copygen
