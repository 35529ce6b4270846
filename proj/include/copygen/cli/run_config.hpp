// SPDX-License-Identifier: Apache-2.0
/**
 * @file   run_config.hpp
 * @brief  Flat "key = value" run configuration for the command-line tool.
 *
 * Lines hold one assignment each; '#' starts a comment; blank lines are
 * ignored. Values are resolved in this order, later sources winning:
 *
 *   1. per-task defaults (selected by `task` and `qg_split`)
 *   2. the config file
 *   3. the COPYGEN_OUTPUT_DIR environment variable (output_dir only)
 *   4. command-line `--set key=value` overrides
 */
#pragma once

#include <copygen/decoding/decode.hpp>
#include <copygen/training/trainer.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>

namespace copygen::cli {

inline constexpr const char* kOutputDirEnv = "COPYGEN_OUTPUT_DIR";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Assignment {
  std::string key;
  std::string value;
  std::string origin;  ///< "file:line", "env" or "flag"
};

struct RunConfig {
  Task task = Task::table2text;
  int qg_split = 1;

  // For table2text a path prefix P naming P.box, P.sent and optionally P.nb;
  // for qg a SQuAD JSON file.
  std::string train;
  std::string valid;
  std::string test;
  std::string embeddings;  ///< GloVe-format text; empty for random initialization
  std::string vocab_file;  ///< one token per line; empty to build from the training data
  std::size_t word_vocab_size = 20000;
  std::size_t field_vocab_size = 1480;
  bool lowercase = true;

  ModelConfig model;
  TrainConfig training;
  DecodeConfig decode;

  std::vector<std::uint64_t> seeds;
  std::string output_dir = "runs";

  static RunConfig defaults(Task task, int split = 1) {
    RunConfig c;
    c.task = task;
    c.qg_split = split;
    c.model = task == Task::qg ? ModelConfig::qg_defaults(split) : ModelConfig::table2text_defaults();
    c.training = TrainConfig::defaults(task, split);
    c.decode = DecodeConfig::defaults(task);
    c.seeds = task == Task::qg ? std::vector<std::uint64_t>{1, 2, 3, 4, 5} : std::vector<std::uint64_t>{1, 2, 3};
    return c;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError("'" + key + "': cannot parse '" + v + "' as a number");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

inline Task parse_task(const std::string& v) {
  if (v == "table2text") return Task::table2text;
  if (v == "qg") return Task::qg;
  throw ConfigError("'task': expected table2text or qg, got '" + v + "'");
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  std::string cur;
  for (char c : v + ",") {
    if (c != ',') {
      cur += c;
      continue;
    }
    const auto s = trim(cur);
    if (!s.empty()) out.push_back(parse_number<std::uint64_t>("seeds", s));
    cur.clear();
  }
  if (out.empty()) throw ConfigError("'seeds': at least one seed is required");
  return out;
}

// Wraps enum parsers that throw std::invalid_argument.
template <class F>
auto checked(const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  using S = std::size_t;
  using D = double;
  static const std::map<std::string, Setter> table = {
      {"task", [](RunConfig& c, const std::string& v) { c.task = parse_task(v); }},
      {"qg_split", [](RunConfig& c, const std::string& v) { c.qg_split = parse_number<int>("qg_split", v); }},
      {"train", [](RunConfig& c, const std::string& v) { c.train = v; }},
      {"valid", [](RunConfig& c, const std::string& v) { c.valid = v; }},
      {"test", [](RunConfig& c, const std::string& v) { c.test = v; }},
      {"embeddings", [](RunConfig& c, const std::string& v) { c.embeddings = v; }},
      {"vocab_file", [](RunConfig& c, const std::string& v) { c.vocab_file = v; }},
      {"word_vocab_size", [](RunConfig& c, const std::string& v) { c.word_vocab_size = parse_number<S>("word_vocab_size", v); }},
      {"field_vocab_size", [](RunConfig& c, const std::string& v) { c.field_vocab_size = parse_number<S>("field_vocab_size", v); }},
      {"lowercase", [](RunConfig& c, const std::string& v) { c.lowercase = parse_bool("lowercase", v); }},
      {"word_dim", [](RunConfig& c, const std::string& v) { c.model.word_dim = parse_number<S>("word_dim", v); }},
      {"field_dim", [](RunConfig& c, const std::string& v) { c.model.field_dim = parse_number<S>("field_dim", v); }},
      {"pos_dim", [](RunConfig& c, const std::string& v) { c.model.pos_dim = parse_number<S>("pos_dim", v); }},
      {"hidden_dim", [](RunConfig& c, const std::string& v) { c.model.hidden_dim = parse_number<S>("hidden_dim", v); }},
      {"attention_dim", [](RunConfig& c, const std::string& v) { c.model.attention_dim = parse_number<S>("attention_dim", v); }},
      {"encoder_layers", [](RunConfig& c, const std::string& v) { c.model.encoder_layers = parse_number<S>("encoder_layers", v); }},
      {"freeze_embeddings", [](RunConfig& c, const std::string& v) { c.model.freeze_word_embeddings = parse_bool("freeze_embeddings", v); }},
      {"dropout",
       [](RunConfig& c, const std::string& v) { c.training.dropout_p = c.model.dropout_p = parse_number<D>("dropout", v); }},
      {"optimizer", [](RunConfig& c, const std::string& v) { c.training.optimizer = checked("optimizer", [&] { return parse_optimizer(v); }); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.training.lr = parse_number<D>("lr", v); }},
      {"clip_norm", [](RunConfig& c, const std::string& v) { c.training.clip_norm = parse_number<D>("clip_norm", v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.training.batch_size = parse_number<S>("batch_size", v); }},
      {"max_epochs", [](RunConfig& c, const std::string& v) { c.training.max_epochs = parse_number<S>("max_epochs", v); }},
      {"ema_decay", [](RunConfig& c, const std::string& v) { c.training.ema_decay = parse_number<D>("ema_decay", v); }},
      {"selection", [](RunConfig& c, const std::string& v) { c.training.selection = checked("selection", [&] { return parse_selection(v); }); }},
      {"decode_mode", [](RunConfig& c, const std::string& v) { c.decode.mode = checked("decode_mode", [&] { return parse_decode_mode(v); }); }},
      {"beam_size", [](RunConfig& c, const std::string& v) { c.decode.beam_size = parse_number<S>("beam_size", v); }},
      {"length_penalty", [](RunConfig& c, const std::string& v) { c.decode.length_penalty_alpha = parse_number<D>("length_penalty", v); }},
      {"length_penalty_form", [](RunConfig& c, const std::string& v) { c.decode.penalty = checked("length_penalty_form", [&] { return parse_length_penalty(v); }); }},
      {"max_len", [](RunConfig& c, const std::string& v) { c.decode.max_len = parse_number<S>("max_len", v); }},
      {"replace_unk", [](RunConfig& c, const std::string& v) { c.decode.replace_unk = parse_bool("replace_unk", v); }},
      {"seeds", [](RunConfig& c, const std::string& v) { c.seeds = parse_seeds(v); }},
      {"output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

}  // namespace detail

/// Every recognised key, in sorted order.
inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : detail::setters()) out.push_back(k);
  return out;
}

inline std::vector<Assignment> parse_config_text(std::string_view text, const std::string& source) {
  std::vector<Assignment> out;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    Assignment a{detail::trim(std::string_view(body).substr(0, eq)), detail::trim(std::string_view(body).substr(eq + 1)),
                 where};
    if (a.key.empty()) throw ConfigError(where + ": missing key");
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<Assignment> read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

/// Parses a command-line override of the form key=value.
inline Assignment parse_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + s + "' is not of the form key=value");
  return {detail::trim(std::string_view(s).substr(0, eq)), detail::trim(std::string_view(s).substr(eq + 1)), "flag"};
}

/**
 * Applies assignments on top of the defaults of the task they select.
 * `fallback_task` is used when no assignment names a task.
 */
inline RunConfig resolve_config(const std::vector<Assignment>& assignments, Task fallback_task = Task::table2text) {
  const auto& table = detail::setters();
  Task task = fallback_task;
  int split = 1;
  for (const auto& a : assignments) {
    if (!table.count(a.key)) throw ConfigError(a.origin + ": unknown key '" + a.key + "'");
    try {
      if (a.key == "task") task = detail::parse_task(a.value);
      if (a.key == "qg_split") split = detail::parse_number<int>("qg_split", a.value);
    } catch (const ConfigError& e) {
      throw ConfigError(a.origin + ": " + e.what());
    }
  }
  if (split != 1 && split != 2) throw ConfigError("'qg_split' must be 1 or 2");
  RunConfig cfg = RunConfig::defaults(task, split);
  for (const auto& a : assignments) {
    try {
      table.at(a.key)(cfg, a.value);
    } catch (const ConfigError& e) {
      throw ConfigError(a.origin + ": " + e.what());
    }
  }
  try {
    cfg.training.validate();
    cfg.decode.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

/// File (optional), then environment, then flags.
inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {},
                                 Task fallback_task = Task::table2text) {
  std::vector<Assignment> all;
  if (!path.empty()) all = read_config_file(path);
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) all.push_back({"output_dir", env, "env"});
  for (const auto& o : overrides) all.push_back(parse_override(o));
  return resolve_config(all, fallback_task);
}

/// Fully resolved configuration in the file format, one key per line.
inline std::string to_config_text(const RunConfig& c) {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  std::string seeds;
  for (auto s : c.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  const std::vector<std::pair<std::string, std::string>> kv = {
      {"task", c.task == Task::qg ? "qg" : "table2text"},
      {"qg_split", std::to_string(c.qg_split)},
      {"train", c.train},
      {"valid", c.valid},
      {"test", c.test},
      {"embeddings", c.embeddings},
      {"vocab_file", c.vocab_file},
      {"word_vocab_size", std::to_string(c.word_vocab_size)},
      {"field_vocab_size", std::to_string(c.field_vocab_size)},
      {"lowercase", c.lowercase ? "true" : "false"},
      {"word_dim", std::to_string(c.model.word_dim)},
      {"field_dim", std::to_string(c.model.field_dim)},
      {"pos_dim", std::to_string(c.model.pos_dim)},
      {"hidden_dim", std::to_string(c.model.hidden_dim)},
      {"attention_dim", std::to_string(c.model.attention_dim)},
      {"encoder_layers", std::to_string(c.model.encoder_layers)},
      {"freeze_embeddings", c.model.freeze_word_embeddings ? "true" : "false"},
      {"dropout", num(c.training.dropout_p)},
      {"optimizer", to_string(c.training.optimizer)},
      {"lr", num(c.training.lr)},
      {"clip_norm", num(c.training.clip_norm)},
      {"batch_size", std::to_string(c.training.batch_size)},
      {"max_epochs", std::to_string(c.training.max_epochs)},
      {"ema_decay", num(c.training.ema_decay)},
      {"selection", to_string(c.training.selection)},
      {"decode_mode", to_string(c.decode.mode)},
      {"beam_size", std::to_string(c.decode.beam_size)},
      {"length_penalty", num(c.decode.length_penalty_alpha)},
      {"length_penalty_form", to_string(c.decode.penalty)},
      {"max_len", std::to_string(c.decode.max_len)},
      {"replace_unk", c.decode.replace_unk ? "true" : "false"},
      {"seeds", seeds},
      {"output_dir", c.output_dir},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

}  // namespace copygen::cli
