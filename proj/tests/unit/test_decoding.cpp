// SPDX-License-Identifier: Apache-2.0
#include <copygen/decoding/decode.hpp>

#include <gtest/gtest.h>

#include "support/step_models.hpp"
#include "support/toy.hpp"

#include <functional>

using namespace copygen;

using copygen::testing::TableModel;
using copygen::testing::Scored;
using copygen::testing::enumerate;
using copygen::testing::strip_eos;
using copygen::testing::beam_cfg;

TEST(Greedy, CertainEndGivesEmptyOutput) {
  TableModel m(1, 6);
  m.override_ = [](const auto&, std::vector<double>& z) { z.assign(z.size(), -1e9), z[3] = 0.0; };
  DecodeConfig c;
  const auto out = greedy_decode(m, c);
  EXPECT_TRUE(out.tokens.empty());
  EXPECT_TRUE(out.ended_with_eos);
  EXPECT_NEAR(out.log_prob, 0.0, 1e-12);
}

TEST(Greedy, RepeatedCallsAgree) {
  TableModel m(8, 7);
  DecodeConfig c;
  c.max_len = 12;
  const auto a = greedy_decode(m, c), b = greedy_decode(m, c);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.attention, b.attention);
}

TEST(Greedy, MatchesArgmaxTrace) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    TableModel m(seed, 6);
    m.override_ = [](const auto& p, std::vector<double>& z) {
      if (p.size() < 5) z[3] = -1e9;
    };
    DecodeConfig c;
    c.max_len = 5;
    std::vector<int> trace;
    for (int t = 0; t < 5; ++t) {
      const auto lp = m.log_probs(trace);
      int best = 0;
      for (int y = 1; y < 6; ++y)
        if (lp[y] > lp[best]) best = y;
      trace.push_back(best);
    }
    const auto out = greedy_decode(m, c);
    EXPECT_EQ(out.tokens, trace) << seed;
    EXPECT_FALSE(out.ended_with_eos);
    ASSERT_EQ(out.attention.size(), 5u);
  }
}

TEST(Greedy, TiesGoToLowestId) {
  TableModel m(2, 5);
  m.override_ = [](const auto& p, std::vector<double>& z) {
    z.assign(z.size(), 0.0);
    if (p.size() == 2) z[3] = 1.0;
  };
  DecodeConfig c;
  EXPECT_EQ(greedy_decode(m, c).tokens, (std::vector<int>{0, 0}));
}

TEST(Beam, WidthOneEqualsGreedy) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    TableModel m(seed, 5 + static_cast<int>(seed % 4), 3, 1.0 + static_cast<double>(seed % 3));
    DecodeConfig g;
    g.max_len = 10;
    const auto greedy = greedy_decode(m, g);
    const auto beam = beam_search(m, beam_cfg(1, 0.0, 10));
    EXPECT_EQ(beam.tokens, greedy.tokens) << seed;
    EXPECT_NEAR(beam.log_prob, greedy.log_prob, 1e-12) << seed;
  }
}

TEST(Beam, WidthOneEqualsGreedyOnNetworks) {
  std::mt19937_64 rng(12);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto task = seed % 2 ? Task::qg : Task::table2text;
    const auto cfg = copygen::testing::toy_config(task);
    const Seq2Seq model(cfg, seed + 100);
    const auto ex = copygen::testing::random_example(cfg, 6, 0, rng);
    const auto words = copygen::testing::toy_vocabulary(cfg.word_vocab);
    const CopyMap copy(ex.source_words, words);
    const Seq2SeqStepper stepper(model, ex.source, copy);
    DecodeConfig g;
    g.max_len = 8;
    const auto greedy = greedy_decode(stepper, g);
    const auto beam = beam_search(stepper, beam_cfg(1, 0.0, 8));
    EXPECT_EQ(beam.tokens, greedy.tokens) << seed;
    for (int id : beam_search(stepper, beam_cfg(5, 1.75, 8)).tokens) {
      EXPECT_NE(id, kPad);
      EXPECT_NE(id, kSos);
    }
  }
}

TEST(Beam, ExhaustiveOptimumUnderLengthPenalty) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    TableModel m(seed, 4, 3, 1.5);
    const auto all = enumerate(m, 3, 1.75);
    const auto best = *std::max_element(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score < b.score;
      return a.tokens > b.tokens;
    });
    const auto out = beam_search(m, beam_cfg(all.size(), 1.75, 3));
    EXPECT_EQ(out.tokens, strip_eos(best.tokens, 3)) << seed;
    EXPECT_NEAR(out.score, best.score, 1e-12) << seed;
  }
}

TEST(Beam, ZeroAlphaRanksByLogProb) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TableModel m(seed, 4, 3, 1.5);
    const auto all = enumerate(m, 3, 0.0);
    const auto best = *std::max_element(all.begin(), all.end(),
                                        [](const Scored& a, const Scored& b) { return a.log_prob < b.log_prob; });
    const auto out = beam_search(m, beam_cfg(64, 0.0, 3));
    EXPECT_EQ(out.tokens, strip_eos(best.tokens, 3)) << seed;
    EXPECT_DOUBLE_EQ(out.score, out.log_prob);
  }
}

TEST(Beam, LengthPenaltyFavoursLongerOutput) {
  // First step: EOS at 0.5 versus a token that leads to a near-certain three-token tail.
  TableModel m(0, 4);
  m.override_ = [](const std::vector<int>& p, std::vector<double>& z) {
    z.assign(z.size(), -30.0);
    if (p.empty()) {
      z[3] = 0.0;
      z[1] = std::log(0.9);
    } else {
      z[p.size() < 4 ? 2 : 3] = 0.0;
    }
  };
  const auto plain = beam_search(m, beam_cfg(4, 0.0, 10));
  const auto penal = beam_search(m, beam_cfg(4, 1.75, 10));
  EXPECT_TRUE(plain.tokens.empty());
  EXPECT_EQ(penal.tokens, (std::vector<int>{1, 2, 2, 2}));
}

TEST(Beam, LogProbNeverIncreasesAndAttentionAligned) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TableModel m(seed, 6);
    const auto out = beam_search(m, beam_cfg(4, 1.0, 7));
    EXPECT_LE(out.log_prob, 0.0);
    EXPECT_EQ(out.attention.size(), out.tokens.size());
    double lp = 0.0;
    std::vector<int> prefix;
    for (int y : out.tokens) {
      lp += m.log_probs(prefix)[static_cast<std::size_t>(y)];
      prefix.push_back(y);
    }
    if (out.ended_with_eos) lp += m.log_probs(prefix)[3];
    EXPECT_NEAR(out.log_prob, lp, 1e-12);
  }
}

TEST(LengthScore, PowerAndGnmt) {
  EXPECT_DOUBLE_EQ(length_score(-4.0, 4, 1.0, LengthPenalty::power), -1.0);
  EXPECT_DOUBLE_EQ(length_score(-4.0, 0, 1.75, LengthPenalty::power), -4.0);
  EXPECT_DOUBLE_EQ(length_score(-3.0, 7, 1.0, LengthPenalty::gnmt), -1.5);
  EXPECT_DOUBLE_EQ(length_score(-3.0, 7, 0.0, LengthPenalty::gnmt), -3.0);
}

TEST(DecodeConfigTest, TaskDefaults) {
  const auto t = DecodeConfig::defaults(Task::table2text);
  EXPECT_EQ(t.mode, DecodeMode::greedy);
  EXPECT_EQ(t.max_len, 60u);
  const auto q = DecodeConfig::defaults(Task::qg);
  EXPECT_EQ(q.mode, DecodeMode::beam);
  EXPECT_EQ(q.beam_size, 20u);
  EXPECT_DOUBLE_EQ(q.length_penalty_alpha, 1.75);
  EXPECT_EQ(q.max_len, 30u);
  DecodeConfig bad;
  bad.beam_size = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

// ---- UNK replacement ----

TEST(ReplaceUnk, NoUnknownsUnchanged) {
  const std::vector<std::string> toks{"a", "b"};
  EXPECT_EQ(replace_unk(toks, {}, {"x"}), toks);
}

TEST(ReplaceUnk, PeakedAttentionSelectsSourceWord) {
  const std::vector<std::string> src{"s0", "s1", "s2", "s3", "marie", "s5"};
  std::vector<std::vector<double>> att(3, std::vector<double>(6, 0.1));
  att[2] = {0.01, 0.02, 0.03, 0.04, 0.85, 0.05};
  const auto out = replace_unk({"born", "in", "<unk>"}, att, src);
  EXPECT_EQ(out, (std::vector<std::string>{"born", "in", "marie"}));
}

TEST(ReplaceUnk, EachUnknownUsesItsOwnRow) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t S = 2 + rng() % 8, T = 1 + rng() % 10;
    std::vector<std::string> src, toks;
    for (std::size_t i = 0; i < S; ++i) src.push_back("src" + std::to_string(i));
    std::vector<std::vector<double>> att(T, std::vector<double>(S));
    for (auto& row : att)
      for (double& v : row) v = u(rng);
    for (std::size_t t = 0; t < T; ++t) toks.push_back(rng() % 2 ? "<unk>" : "tok" + std::to_string(t));
    const auto out = replace_unk(toks, att, src);
    ASSERT_EQ(out.size(), toks.size());
    for (std::size_t t = 0; t < T; ++t) {
      if (toks[t] != "<unk>") {
        EXPECT_EQ(out[t], toks[t]);
        continue;
      }
      std::size_t arg = 0;
      for (std::size_t j = 1; j < S; ++j)
        if (att[t][j] > att[t][arg]) arg = j;
      EXPECT_EQ(out[t], src[arg]);
    }
    EXPECT_EQ(std::count(out.begin(), out.end(), "<unk>"), 0);
  }
}

TEST(ReplaceUnk, MissingRowIsAlignmentError) {
  EXPECT_THROW(replace_unk({"a", "<unk>"}, {{1.0}}, {"x"}), AlignmentError);
  EXPECT_THROW(replace_unk({"<unk>"}, {{0.5, 0.5}}, {"x"}), AlignmentError);
}

TEST(GenerateWords, CopiesOovSourceWordsAndNeverEmitsReserved) {
  std::mt19937_64 rng(31);
  for (Task task : {Task::table2text, Task::qg}) {
    const auto cfg = copygen::testing::toy_config(task);
    const Seq2Seq model(cfg, 5);
    const auto words = copygen::testing::toy_vocabulary(cfg.word_vocab);
    for (int i = 0; i < 5; ++i) {
      const auto ex = copygen::testing::random_example(cfg, 7, 0, rng);
      DecodeConfig dc = DecodeConfig::defaults(task);
      dc.max_len = 10;
      dc.beam_size = std::min<std::size_t>(dc.beam_size, 4);
      GenerationOutput raw;
      const auto text = generate_words(model, ex, words, dc, &raw);
      ASSERT_EQ(text.size(), raw.tokens.size());
      for (std::size_t t = 0; t < text.size(); ++t) {
        EXPECT_NE(text[t], "<unk>");
        EXPECT_NE(text[t], "<pad>");
        EXPECT_NE(text[t], "<s>");
        const int id = raw.tokens[t];
        if (id >= static_cast<int>(words.size())) {
          EXPECT_EQ(text[t], CopyMap(ex.source_words, words).oov_words[static_cast<std::size_t>(id) - words.size()]);
          EXPECT_NE(std::find(ex.source_words.begin(), ex.source_words.end(), text[t]), ex.source_words.end());
        }
      }
    }
  }
}
