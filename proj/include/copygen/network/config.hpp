// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace copygen {

enum class Task { table2text, qg };

inline std::string to_string(Task t) { return t == Task::table2text ? "table2text" : "qg"; }

inline Task parse_task(const std::string& s) {
  if (s == "table2text") return Task::table2text;
  if (s == "qg") return Task::qg;
  throw std::invalid_argument("unknown task '" + s + "' (expected table2text or qg)");
}

inline void to_json(nlohmann::json& j, Task t) { j = to_string(t); }
inline void from_json(const nlohmann::json& j, Task& t) { t = parse_task(j.get<std::string>()); }

struct ModelConfig {
  Task task = Task::table2text;
  std::size_t word_vocab = 0;   ///< including the 4 reserved ids; also the decoder output vocabulary
  std::size_t field_vocab = 0;  ///< table2text only
  std::size_t word_dim = 400;
  std::size_t field_dim = 50;
  std::size_t pos_dim = 5;
  std::size_t hidden_dim = 500;
  std::size_t attention_dim = 0;  ///< 0 means hidden_dim
  std::size_t encoder_layers = 1;
  double dropout_p = 0.0;
  bool freeze_word_embeddings = false;

  /// Single-layer BiLSTM, 400/50/5 word/field/position embeddings, hidden 500.
  static ModelConfig table2text_defaults() { return {}; }

  /// Two-layer BiLSTM over frozen 300-d embeddings; hidden 350 / dropout 0.1 (split 1) or 512 / 0.3 (split 2).
  static ModelConfig qg_defaults(int split = 1) {
    ModelConfig c;
    c.task = Task::qg;
    c.word_dim = 300;
    c.field_dim = 0;
    c.pos_dim = 0;
    c.hidden_dim = split == 2 ? 512 : 350;
    c.encoder_layers = 2;
    c.dropout_p = split == 2 ? 0.3 : 0.1;
    c.freeze_word_embeddings = true;
    return c;
  }

  static ModelConfig defaults(Task t) { return t == Task::table2text ? table2text_defaults() : qg_defaults(); }

  std::size_t input_dim() const {
    return task == Task::table2text ? word_dim + field_dim + 2 * pos_dim : word_dim + 1;
  }
  std::size_t attn_dim() const { return attention_dim ? attention_dim : hidden_dim; }

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("model config: ") + what);
    };
    need(word_vocab > 4, "word_vocab must exceed the 4 reserved ids");
    need(task == Task::qg || field_vocab > 4, "field_vocab must exceed the 4 reserved ids");
    need(word_dim > 0 && hidden_dim > 0 && encoder_layers > 0, "dimensions must be positive");
    need(task == Task::qg || (field_dim > 0 && pos_dim > 0), "table2text needs field and position dims");
    need(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelConfig, task, word_vocab, field_vocab, word_dim, field_dim, pos_dim,
                                   hidden_dim, attention_dim, encoder_layers, dropout_p, freeze_word_embeddings)

}  // namespace copygen
