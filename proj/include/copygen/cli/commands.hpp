// SPDX-License-Identifier: Apache-2.0
/**
 * @file   commands.hpp
 * @brief  train / generate / evaluate / gradcheck as library calls plus the
 *         in-process command-line front end.
 *
 * Exit codes: 0 ok, 2 configuration or input, 3 numeric, 4 compatibility,
 * 5 alignment, 6 verification.
 */
#pragma once

#include <copygen/cli/run_config.hpp>
#include <copygen/data/embeddings.hpp>
#include <copygen/metrics/metrics.hpp>
#include <copygen/training/checkpoint.hpp>
#include <copygen/training/model_check.hpp>

#include <CLI11.hpp>
#include <glob.h>

#include <filesystem>
#include <set>
#include <iomanip>

namespace copygen::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitCompatibility = 4,
  kExitAlignment = 5,
  kExitVerification = 6,
};

/// Checkpoint and run configuration disagree on the task.
class TaskMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hypothesis and reference files differ in length.
class LineCountError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Data loading

struct LoadedSplit {
  std::vector<InfoboxRecord> tables;
  std::vector<QGExample> questions;

  std::size_t size() const { return tables.size() + questions.size(); }
};

inline bool file_exists(const std::string& p) { return std::filesystem::is_regular_file(p); }

/// Table splits are path prefixes (P.box, P.sent, optional P.nb); question splits are SQuAD JSON files.
inline LoadedSplit load_split(const RunConfig& cfg, const std::string& path, bool with_targets = true) {
  LoadedSplit s;
  if (cfg.task == Task::table2text) {
    const std::string box = path + ".box";
    if (!file_exists(box)) throw FileError("cannot open '" + box + "'");
    const std::string sent = with_targets ? path + ".sent" : std::string();
    const std::string nb = with_targets && file_exists(path + ".nb") ? path + ".nb" : std::string();
    s.tables = read_wikibio(box, sent, nb, cfg.lowercase);
  } else {
    s.questions = read_squad(path, cfg.lowercase).examples;
  }
  return s;
}

inline Vocabulary read_vocabulary_file(const std::string& path, std::size_t max_size) {
  std::vector<std::string> toks;
  std::set<std::string> seen;
  const Vocabulary reserved;
  for (const auto& line : read_lines(path)) {
    const auto parts = split_whitespace(line);
    if (parts.empty() || reserved.contains(parts[0]) || !seen.insert(parts[0]).second) continue;
    if (toks.size() == max_size) break;
    toks.push_back(parts[0]);
  }
  return Vocabulary(toks);
}

/// Word and field vocabularies from the training split, or from `vocab_file` for words.
inline std::pair<Vocabulary, Vocabulary> build_vocabularies(const RunConfig& cfg, const LoadedSplit& train) {
  std::vector<std::string> words, fields;
  for (const auto& r : train.tables) {
    for (const auto& w : source_words(r)) words.push_back(w);
    words.insert(words.end(), r.reference.begin(), r.reference.end());
    for (const auto& f : r.fields) fields.push_back(f.name);
  }
  for (const auto& q : train.questions) {
    words.insert(words.end(), q.passage_tokens.begin(), q.passage_tokens.end());
    words.insert(words.end(), q.question_tokens.begin(), q.question_tokens.end());
  }
  Vocabulary wv = cfg.vocab_file.empty() ? Vocabulary::build(words, cfg.word_vocab_size)
                                         : read_vocabulary_file(cfg.vocab_file, cfg.word_vocab_size);
  Vocabulary fv = cfg.task == Task::table2text ? Vocabulary::build(fields, cfg.field_vocab_size) : Vocabulary();
  return {std::move(wv), std::move(fv)};
}

inline std::vector<Example> make_examples(const LoadedSplit& s, const Vocabulary& words, const Vocabulary& fields) {
  std::vector<Example> out;
  out.reserve(s.size());
  for (const auto& r : s.tables) out.push_back(make_table_example(r, words, fields));
  for (const auto& q : s.questions) out.push_back(make_qg_example(q, words));
  return out;
}

/// Model configuration sized to the vocabularies.
inline ModelConfig sized_model(const RunConfig& cfg, const Vocabulary& words, const Vocabulary& fields) {
  ModelConfig m = cfg.model;
  m.task = cfg.task;
  m.word_vocab = words.size();
  m.field_vocab = cfg.task == Task::table2text ? fields.size() : 0;
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// train

struct PreparedData {
  Vocabulary words;
  Vocabulary fields;
  TrainData data;
  std::optional<Tensor> pretrained;
};

inline PreparedData prepare_training_data(const RunConfig& cfg) {
  if (cfg.train.empty()) throw ConfigError("'train' is not set");
  if (cfg.valid.empty()) throw ConfigError("'valid' is not set");
  const auto train = load_split(cfg, cfg.train);
  const auto valid = load_split(cfg, cfg.valid);
  auto [words, fields] = build_vocabularies(cfg, train);
  PreparedData p{words, fields, {make_examples(train, words, fields), make_examples(valid, words, fields)}, {}};
  if (!cfg.embeddings.empty()) p.pretrained = load_pretrained_embeddings(cfg.embeddings, words, cfg.model.word_dim);
  return p;
}

inline std::string checkpoint_path(const RunConfig& cfg, std::uint64_t seed) {
  return (std::filesystem::path(cfg.output_dir) / ("seed" + std::to_string(seed) + ".ckpt")).string();
}

inline std::string format_epoch(std::uint64_t seed, const EpochRecord& r) {
  std::ostringstream os;
  os << std::setprecision(6) << "seed " << seed << " epoch " << r.epoch << " train_loss ";
  if (r.train_loss)
    os << *r.train_loss;
  else
    os << "-";
  os << " valid_loss_raw " << r.valid_loss_raw << " valid_loss_ema " << r.valid_loss_ema;
  if (r.valid_bleu_ema) os << " valid_bleu_ema " << *r.valid_bleu_ema;
  return os.str();
}

/// One training run for `seed`; returns the selected bundle.
inline CheckpointBundle train_seed(const RunConfig& cfg, const PreparedData& p, std::uint64_t seed,
                                   const EpochLogger& log = {}) {
  TrainConfig tc = cfg.training;
  tc.seed = seed;
  const ModelConfig mc = sized_model(cfg, p.words, p.fields);
  auto start = initial_bundle(mc, tc, p.words, p.fields, p.pretrained ? &*p.pretrained : nullptr);
  return train(std::move(start), p.data, log).best;
}

/// Trains every seed in turn and writes output_dir/seed<k>.ckpt for each.
inline std::vector<std::string> cmd_train(const RunConfig& cfg, std::ostream& log) {
  const PreparedData p = prepare_training_data(cfg);
  log << "train: " << p.data.train.size() << " examples, valid: " << p.data.valid.size() << " examples, words "
      << p.words.size() << ", fields " << p.fields.size() << "\n";
  std::filesystem::create_directories(cfg.output_dir);
  std::vector<std::string> written;
  for (auto seed : cfg.seeds) {
    const auto best = train_seed(cfg, p, seed, [&](const EpochRecord& r) { log << format_epoch(seed, r) << "\n"; });
    const auto path = checkpoint_path(cfg, seed);
    save_checkpoint(best, path);
    log << "seed " << seed << " best epoch " << best.best_epoch << " -> " << path << "\n";
    written.push_back(path);
  }
  return written;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string attention;  ///< optional JSON-lines sidecar
  bool use_ema = true;
};

struct GeneratedText {
  std::vector<std::vector<std::string>> hypotheses;
  std::vector<GenerationOutput> raw;
};

/// Decodes every input of `split` with the bundle's weights.
inline GeneratedText generate_split(const CheckpointBundle& b, const LoadedSplit& split, const DecodeConfig& dc,
                                    bool use_ema) {
  const Seq2Seq model = bundle_model(b, use_ema);
  GeneratedText out;
  for (const auto& ex : make_examples(split, b.words, b.fields)) {
    GenerationOutput raw;
    out.hypotheses.push_back(generate_words(model, ex, b.words, dc, &raw));
    out.raw.push_back(std::move(raw));
  }
  return out;
}

inline void write_attention(const std::string& path, const GeneratedText& g) {
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < g.raw.size(); ++i)
    lines.push_back(nlohmann::json{{"tokens", g.hypotheses[i]}, {"attention", g.raw[i].attention}}.dump());
  write_lines(path, lines);
}

/// `cfg.task` must match the checkpoint; decoding settings and lowercasing come from `cfg`.
inline GeneratedText cmd_generate(const RunConfig& cfg, const CheckpointBundle& b, const GenerateOptions& opt,
                                  std::ostream& log) {
  if (b.model.task != cfg.task)
    throw TaskMismatchError("checkpoint '" + opt.checkpoint + "' was trained for " + to_string(b.model.task) +
                            " but the configuration selects " + to_string(cfg.task));
  const std::string input = cfg.task == Task::table2text && opt.input.size() > 4 &&
                                    opt.input.compare(opt.input.size() - 4, 4, ".box") == 0
                                ? opt.input.substr(0, opt.input.size() - 4)
                                : opt.input;
  const auto split = load_split(cfg, input, false);
  const auto g = generate_split(b, split, cfg.decode, opt.use_ema);
  std::vector<std::string> lines;
  for (const auto& h : g.hypotheses) lines.push_back(join(h));
  write_lines(opt.output, lines);
  if (!opt.attention.empty()) write_attention(opt.attention, g);
  log << "generated " << lines.size() << " sequences with " << (opt.use_ema ? "ema" : "raw") << " weights -> "
      << opt.output << "\n";
  return g;
}

// ---------------------------------------------------------------------------
// evaluate

inline Corpus read_corpus(const std::string& path) {
  Corpus c;
  for (const auto& line : read_lines(path)) c.push_back(split_whitespace(line));
  return c;
}

inline std::vector<std::string> glob_paths(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  globfree(&g);
  std::sort(out.begin(), out.end());
  if (out.empty()) throw FileError("no files match '" + pattern + "'");
  return out;
}

/// Scores each hypothesis file against `ref`; seeds are labelled by file stem.
inline EvalReport evaluate_files(const std::vector<std::string>& hyps, const std::string& ref) {
  const Corpus refs = read_corpus(ref);
  std::vector<ScoreMap> scores;
  std::vector<std::string> labels;
  for (const auto& path : hyps) {
    const Corpus h = read_corpus(path);
    if (h.size() != refs.size())
      throw LineCountError("'" + path + "' has " + std::to_string(h.size()) + " lines but '" + ref + "' has " +
                           std::to_string(refs.size()));
    scores.push_back(score_corpus(h, refs));
    labels.push_back(std::filesystem::path(path).stem().string());
  }
  return aggregate_seeds(scores, labels);
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckReport {
  std::map<Task, GradcheckResult> results;
  double max_relative_error = 0.0;
  std::vector<std::string> offending;  ///< "task:parameter" entries at or above the tolerance
};

inline constexpr double kGradcheckTolerance = 1e-4;

inline GradcheckReport cmd_gradcheck(const ModelCheckOptions& opts) {
  GradcheckReport rep;
  for (Task t : {Task::table2text, Task::qg}) {
    auto r = check_model_gradients(t, opts);
    rep.max_relative_error = std::max(rep.max_relative_error, r.max_relative_error);
    for (const auto& [name, err] : r.per_parameter)
      if (!(err < kGradcheckTolerance)) rep.offending.push_back(to_string(t) + ":" + name);
    rep.results.emplace(t, std::move(r));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Front end

/// Maps the exception in flight to an exit code and prints it.
inline int report_failure(std::ostream& err) {
  try {
    throw;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const TaskMismatchError& e) {
    err << "task mismatch: " << e.what() << "\n";
    return kExitCompatibility;
  } catch (const CheckpointError& e) {
    err << e.what() << "\n";
    return e.cause() == CheckpointError::Cause::io ? kExitConfig : kExitCompatibility;
  } catch (const LineCountError& e) {
    err << "line count mismatch: " << e.what() << "\n";
    return kExitAlignment;
  } catch (const AlignmentError& e) {
    err << "alignment error: " << e.what() << "\n";
    return kExitAlignment;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

inline std::optional<Task> explicit_task(const std::string& config, const std::vector<std::string>& sets) {
  std::optional<Task> t;
  auto take = [&](const Assignment& a) {
    if (a.key == "task") t = detail::parse_task(a.value);
  };
  if (!config.empty())
    for (const auto& a : read_config_file(config)) take(a);
  for (const auto& s : sets) take(parse_override(s));
  return t;
}

inline void log_config(std::ostream& err, const RunConfig& cfg) {
  err << "resolved configuration:\n";
  std::istringstream lines(to_config_text(cfg));
  for (std::string l; std::getline(lines, l);) err << "  " << l << "\n";
}

/// Runs one command. `args` excludes the program name.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"copy-augmented sequence-to-sequence generation", "copygen"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> sets;

  auto* train = app.add_subcommand("train", "train one model per seed and write checkpoints");
  train->add_option("--config", config, "run configuration file")->required();
  train->add_option("--set", sets, "override a configuration key (key=value)");

  GenerateOptions gen;
  std::string weights = "ema";
  auto* generate = app.add_subcommand("generate", "decode an input file with a trained checkpoint");
  generate->add_option("--config", config, "run configuration file");
  generate->add_option("--set", sets, "override a configuration key (key=value)");
  generate->add_option("--checkpoint", gen.checkpoint)->required();
  generate->add_option("--input", gen.input, "table .box file or prefix, or SQuAD JSON")->required();
  generate->add_option("--output", gen.output)->required();
  generate->add_option("--weights", weights)->check(CLI::IsMember({"ema", "raw"}));
  generate->add_option("--attention", gen.attention, "write per-token attention as JSON lines");

  std::string hyp, ref, seed_glob, report_prefix;
  auto* evaluate = app.add_subcommand("evaluate", "score hypotheses against references");
  evaluate->add_option("--hyp", hyp, "single hypothesis file");
  evaluate->add_option("--seed-glob", seed_glob, "pattern matching one hypothesis file per seed");
  evaluate->add_option("--ref", ref)->required();
  evaluate->add_option("--output", report_prefix, "write PREFIX.txt and PREFIX.json");

  std::string size = "small";
  ModelCheckOptions mco;
  std::size_t probes = 0;
  std::string fault_kind;
  double fault_scale = 1.01;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
  gradcheck->add_option("--size", size)->check(CLI::IsMember({"small"}));
  gradcheck->add_option("--seed", mco.seed);
  gradcheck->add_option("--probes", probes, "random probes per tensor (default: every coordinate)");
  gradcheck->add_option("--fault", fault_kind)->group("");
  gradcheck->add_option("--fault-scale", fault_scale)->group("");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << (e.get_name() == "RequiredError" || e.get_name() == "ValidationError" ? "usage error: " : "error: ")
        << e.what() << "\n";
    err << app.help();
    return kExitConfig;
  }

  try {
    if (*train) {
      if (!file_exists(config)) throw ConfigError("config file '" + config + "' not found");
      const RunConfig cfg = load_run_config(config, sets);
      log_config(err, cfg);
      for (const auto& p : cmd_train(cfg, err)) out << p << "\n";
      return kExitOk;
    }
    if (*generate) {
      if (!config.empty() && !file_exists(config)) throw ConfigError("config file '" + config + "' not found");
      const CheckpointBundle b = load_checkpoint(gen.checkpoint);
      const RunConfig cfg = load_run_config(config, sets, explicit_task(config, sets).value_or(b.model.task));
      gen.use_ema = weights == "ema";
      log_config(err, cfg);
      cmd_generate(cfg, b, gen, err);
      return kExitOk;
    }
    if (*evaluate) {
      if (hyp.empty() == seed_glob.empty()) throw ConfigError("give exactly one of --hyp and --seed-glob");
      const auto files = seed_glob.empty() ? std::vector<std::string>{hyp} : glob_paths(seed_glob);
      const EvalReport r = evaluate_files(files, ref);
      const std::string text = report_text(r);
      out << text;
      if (!report_prefix.empty()) {
        std::ofstream(report_prefix + ".txt") << text;
        std::ofstream(report_prefix + ".json") << report_json(r).dump(2) << "\n";
      }
      return kExitOk;
    }
    if (*gradcheck) {
      if (probes > 0) mco.probes_per_tensor = probes;
      if (!fault_kind.empty()) mco.fault = std::pair<std::string, double>{fault_kind, fault_scale};
      const auto rep = cmd_gradcheck(mco);
      for (const auto& [t, r] : rep.results)
        out << to_string(t) << ": max relative error " << std::scientific << std::setprecision(3)
            << r.max_relative_error << " over " << r.probes << " probes (worst " << r.worst_parameter << "["
            << r.worst_index << "])\n";
      out << "max relative error " << std::scientific << std::setprecision(3) << rep.max_relative_error << "\n";
      if (!rep.offending.empty()) {
        err << "gradient check failed for:";
        for (const auto& n : rep.offending) err << " " << n;
        err << "\n";
        return kExitVerification;
      }
      return kExitOk;
    }
  } catch (...) {
    return report_failure(err);
  }
  return kExitConfig;
}

}  // namespace copygen::cli
