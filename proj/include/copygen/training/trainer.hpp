// SPDX-License-Identifier: Apache-2.0
/**
 * @file   trainer.hpp
 * @brief  Teacher-forced training with gradient clipping, Adam/AdaGrad,
 *         EMA shadow weights and best-on-validation retention.
 *
 * Randomness is derived from (seed, epoch) for shuffling and from
 * (seed, step, example) for dropout, so a run resumed from a bundle
 * continues exactly as an uninterrupted one.
 */
#pragma once

#include <copygen/decoding/decode.hpp>
#include <copygen/metrics/metrics.hpp>
#include <copygen/training/ema.hpp>
#include <copygen/training/loss.hpp>
#include <copygen/training/optim.hpp>

#include <functional>
#include <numeric>

namespace copygen {

enum class Selection { loss, bleu };

inline std::string to_string(Selection s) { return s == Selection::loss ? "loss" : "bleu"; }
inline Selection parse_selection(const std::string& s) {
  if (s == "loss") return Selection::loss;
  if (s == "bleu") return Selection::bleu;
  throw std::invalid_argument("unknown selection criterion '" + s + "' (expected loss or bleu)");
}
inline void to_json(nlohmann::json& j, Selection s) { j = to_string(s); }
inline void from_json(const nlohmann::json& j, Selection& s) { s = parse_selection(j.get<std::string>()); }

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 5e-4;
  double clip_norm = 5.0;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  double ema_decay = 0.9999;
  std::uint64_t seed = 1;
  double dropout_p = 0.0;
  Selection selection = Selection::loss;

  static TrainConfig defaults(Task t, int split = 1) {
    TrainConfig c;
    if (t == Task::qg) {
      c.optimizer = OptimizerKind::adagrad;
      c.lr = 0.3;
      c.batch_size = 50;
      c.max_epochs = 20;
      c.dropout_p = split == 2 ? 0.3 : 0.1;
    }
    return c;
  }

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
    };
    need(lr > 0.0, "lr must be positive");
    need(clip_norm > 0.0, "clip_norm must be positive");
    need(batch_size > 0, "batch_size must be positive");
    need(ema_decay >= 0.0 && ema_decay <= 1.0, "ema_decay must lie in [0, 1]");
    need(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p must lie in [0, 1)");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, optimizer, lr, clip_norm, batch_size, max_epochs, ema_decay, seed,
                                   dropout_p, selection)

struct EpochRecord {
  std::size_t epoch = 0;
  std::optional<double> train_loss;  ///< absent for the pre-training evaluation
  double valid_loss_raw = 0.0;
  double valid_loss_ema = 0.0;
  std::optional<double> valid_bleu_ema;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct CheckpointBundle {
  ModelConfig model;
  TrainConfig train;
  Vocabulary words;
  Vocabulary fields;
  NamedTensors params;
  EmaShadow ema;
  OptimizerState optimizer;
  std::size_t epoch = 0;      ///< completed epochs
  double valid_score = 0.0;   ///< selection score of these weights; lower is better
  std::size_t best_epoch = 0;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> history;

  friend bool operator==(const CheckpointBundle&, const CheckpointBundle&) = default;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainData {
  std::vector<Example> train;
  std::vector<Example> valid;
};

struct TrainResult {
  CheckpointBundle best;
  CheckpointBundle last;
};

using EpochLogger = std::function<void(const EpochRecord&)>;

/// Fresh bundle: model initialized from train.seed, EMA shadow equal to the parameters.
inline CheckpointBundle initial_bundle(const ModelConfig& model, const TrainConfig& train, Vocabulary words,
                                       Vocabulary fields, const Tensor* pretrained_words = nullptr) {
  train.validate();
  Seq2Seq m(model, train.seed);
  if (pretrained_words) m.set_word_embeddings(*pretrained_words);
  CheckpointBundle b;
  b.model = model;
  b.train = train;
  b.words = std::move(words);
  b.fields = std::move(fields);
  b.params = std::move(m.parameters());
  b.ema = EmaShadow::from(b.params, train.ema_decay);
  return b;
}

/// Weights of a bundle as a model; `use_ema` substitutes the shadow.
inline Seq2Seq bundle_model(const CheckpointBundle& b, bool use_ema) {
  return Seq2Seq(b.model, use_ema ? apply_shadow(b.params, b.ema) : b.params);
}

inline double corpus_bleu(const Seq2Seq& model, const std::vector<Example>& data, const Vocabulary& words,
                          const DecodeConfig& dc) {
  Corpus hyp, ref;
  for (const auto& ex : data) {
    hyp.push_back(generate_words(model, ex, words, dc));
    ref.push_back(ex.target_words);
  }
  return bleu4(hyp, ref);
}

namespace detail {

inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

inline EpochRecord evaluate_epoch(const CheckpointBundle& b, const std::vector<Example>& valid) {
  EpochRecord r;
  r.epoch = b.epoch;
  r.valid_loss_raw = evaluate_loss(bundle_model(b, false), valid, b.words);
  const Seq2Seq averaged = bundle_model(b, true);
  r.valid_loss_ema = evaluate_loss(averaged, valid, b.words);
  if (b.train.selection == Selection::bleu)
    r.valid_bleu_ema = corpus_bleu(averaged, valid, b.words, DecodeConfig::defaults(b.model.task));
  return r;
}

inline double selection_score(const EpochRecord& r) { return r.valid_bleu_ema ? -*r.valid_bleu_ema : r.valid_loss_ema; }

}  // namespace detail

/**
 * Trains from `start` until start.train.max_epochs epochs are complete.
 * `best_so_far` carries the retained bundle of an interrupted run.
 */
inline TrainResult train(CheckpointBundle start, const TrainData& data, const EpochLogger& log = {},
                         const CheckpointBundle* best_so_far = nullptr) {
  if (data.train.empty() || data.valid.empty())
    throw std::invalid_argument("train: training and validation sets must be nonempty");
  const TrainConfig cfg = start.train;
  cfg.validate();

  TrainResult res;
  CheckpointBundle& cur = start;
  auto retain = [&](const EpochRecord& r) {
    cur.valid_score = detail::selection_score(r);
    cur.history.push_back(r);
    if (log) log(r);
    if (cur.valid_score < cur.best_score) {
      cur.best_score = cur.valid_score;
      cur.best_epoch = cur.epoch;
      res.best = cur;
    }
  };

  if (best_so_far) res.best = *best_so_far;
  if (cur.history.empty()) retain(detail::evaluate_epoch(cur, data.valid));

  Seq2Seq model(cur.model, std::move(cur.params));
  for (std::size_t epoch = cur.epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = detail::derived_rng(cfg.seed, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::size_t tokens = 0;
      for (std::size_t i = begin; i < end; ++i) tokens += data.train[order[i]].target_words.size() + 1;
      GradientMap grads;
      double batch_nll = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        auto rng = detail::derived_rng(cfg.seed, cur.optimizer.step, order[i]);
        Graph g;
        Expr nll = sequence_nll(g, model, data.train[order[i]], cur.words, DropoutContext{cfg.dropout_p, &rng});
        batch_nll += nll.value().item();
        g.backward(scale(nll, 1.0 / static_cast<double>(tokens)), grads);
      }
      const double norm = clip_gradients(grads, cfg.clip_norm);
      if (!std::isfinite(batch_nll) || !std::isfinite(norm)) {
        std::string ids;
        for (std::size_t i = begin; i < end; ++i) ids += (i > begin ? "," : "") + std::to_string(order[i]);
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(cur.optimizer.step + 1) + ": batch loss " + std::to_string(batch_nll) +
                           ", gradient norm " + std::to_string(norm) + ", examples [" + ids + "]");
      }
      optimizer_step(cfg.optimizer, model.parameters(), grads, cur.optimizer, cfg.lr);
      ema_update(cur.ema, model.parameters());
      epoch_nll += batch_nll;
      epoch_tokens += tokens;
    }

    cur.params = model.parameters();
    cur.epoch = epoch;
    EpochRecord r = detail::evaluate_epoch(cur, data.valid);
    r.train_loss = epoch_nll / static_cast<double>(epoch_tokens);
    retain(r);
  }
  cur.params = std::move(model.parameters());
  res.last = std::move(cur);
  if (res.best.params.empty()) res.best = res.last;
  return res;
}

}  // namespace copygen
