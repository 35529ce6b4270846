// SPDX-License-Identifier: Apache-2.0
// Brute-force n-gram and LCS oracles for the metric tests.
#pragma once

#include <copygen/metrics/metrics.hpp>

#include <random>
#include <sstream>

namespace copygen::testing::oracles {

Sentence words(const std::string& s) {
  std::istringstream in(s);
  Sentence out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

bool same_ngram(const Sentence& a, std::size_t i, const Sentence& b, std::size_t j, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k)
    if (a[i + k] != b[j + k]) return false;
  return true;
}

// Clipped matches by direct position scanning: each distinct hyp n-gram counted once, capped by its ref count.
std::size_t brute_clipped(const Sentence& h, const Sentence& r, std::size_t n) {
  if (h.size() < n) return 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i + n <= h.size(); ++i) {
    bool first = true;
    for (std::size_t p = 0; p < i; ++p) first = first && !same_ngram(h, p, h, i, n);
    if (!first) continue;
    std::size_t in_h = 0, in_r = 0;
    for (std::size_t p = 0; p + n <= h.size(); ++p) in_h += same_ngram(h, p, h, i, n);
    for (std::size_t p = 0; p + n <= r.size(); ++p) in_r += same_ngram(r, p, h, i, n);
    total += std::min(in_h, in_r);
  }
  return total;
}

double brute_bleu(const Corpus& hyp, const Corpus& ref) {
  double logp = 0.0;
  double hl = 0.0, rl = 0.0;
  for (std::size_t i = 0; i < hyp.size(); ++i) hl += hyp[i].size(), rl += ref[i].size();
  for (std::size_t n = 1; n <= 4; ++n) {
    double m = 0.0, t = 0.0;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      m += brute_clipped(hyp[i], ref[i], n);
      t += hyp[i].size() >= n ? hyp[i].size() - n + 1 : 0;
    }
    if (m == 0.0) return 0.0;
    logp += std::log(m / t);
  }
  return (hl >= rl ? 1.0 : std::exp(1.0 - rl / hl)) * std::exp(logp / 4.0);
}

double brute_rouge_n(const Corpus& hyp, const Corpus& ref, std::size_t n) {
  double m = 0.0, ht = 0.0, rt = 0.0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    m += brute_clipped(hyp[i], ref[i], n);
    ht += hyp[i].size() >= n ? hyp[i].size() - n + 1 : 0;
    rt += ref[i].size() >= n ? ref[i].size() - n + 1 : 0;
  }
  const double p = ht > 0 ? m / ht : 0.0, r = m / rt;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

// Full-table LCS recurrence.
std::size_t dp_lcs(const Sentence& a, const Sentence& b) {
  std::vector<std::vector<std::size_t>> L(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      L[i][j] = a[i - 1] == b[j - 1] ? L[i - 1][j - 1] + 1 : std::max(L[i - 1][j], L[i][j - 1]);
  return L[a.size()][b.size()];
}

Sentence random_sentence(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len, int vocab) {
  Sentence s(min_len + rng() % (max_len - min_len + 1));
  for (auto& w : s) w = "t" + std::to_string(rng() % static_cast<std::uint64_t>(vocab));
  return s;
}

Corpus random_corpus(std::mt19937_64& rng, std::size_t pairs, int vocab) {
  Corpus c;
  for (std::size_t i = 0; i < pairs; ++i) c.push_back(random_sentence(rng, 4, 14, vocab));
  return c;
}

}  // namespace copygen::testing::oracles
