// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Corpus BLEU-4, ROUGE-N, ROUGE-L and multi-seed aggregation.
 */
#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace copygen {

using Sentence = std::vector<std::string>;
using Corpus = std::vector<Sentence>;

class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_aligned(const char* metric, const Corpus& hyp, const Corpus& ref) {
  if (hyp.size() != ref.size())
    throw std::invalid_argument(std::string(metric) + ": " + std::to_string(hyp.size()) + " hypotheses vs " +
                                std::to_string(ref.size()) + " references");
  if (hyp.empty()) throw UndefinedMetricError(std::string(metric) + ": empty corpus");
}

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> c;
  if (s.size() < n) return c;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++c[Sentence(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                            s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return c;
}

/// Sum over n-grams of min(count in hyp, count in ref).
inline std::size_t clipped_overlap(const Sentence& hyp, const Sentence& ref, std::size_t n) {
  const auto h = ngram_counts(hyp, n);
  const auto r = ngram_counts(ref, n);
  std::size_t m = 0;
  for (const auto& [g, c] : h)
    if (auto it = r.find(g); it != r.end()) m += std::min(c, it->second);
  return m;
}

inline std::size_t ngram_total(const Sentence& s, std::size_t n) { return s.size() >= n ? s.size() - n + 1 : 0; }

inline std::size_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// Corpus BLEU with n = 1..4, clipped counts, brevity penalty, single reference, no smoothing.
inline double bleu4(const Corpus& hyp, const Corpus& ref) {
  detail::require_aligned("bleu4", hyp, ref);
  std::size_t match[4] = {}, total[4] = {};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    hyp_len += hyp[i].size();
    ref_len += ref[i].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      match[n - 1] += detail::clipped_overlap(hyp[i], ref[i], n);
      total[n - 1] += detail::ngram_total(hyp[i], n);
    }
  }
  double log_p = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (match[n] == 0) return 0.0;
    log_p += std::log(static_cast<double>(match[n]) / static_cast<double>(total[n])) / 4.0;
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_p);
}

enum class RougeScore { f1, recall };

/// Corpus ROUGE-N: clipped n-gram overlap, precision and recall pooled over all pairs.
inline double rouge_n(const Corpus& hyp, const Corpus& ref, std::size_t n = 4, RougeScore kind = RougeScore::f1) {
  detail::require_aligned("rouge_n", hyp, ref);
  if (n == 0) throw std::invalid_argument("rouge_n: n must be positive");
  std::size_t overlap = 0, hyp_total = 0, ref_total = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    overlap += detail::clipped_overlap(hyp[i], ref[i], n);
    hyp_total += detail::ngram_total(hyp[i], n);
    ref_total += detail::ngram_total(ref[i], n);
  }
  if (ref_total == 0)
    throw UndefinedMetricError("rouge_n: every reference is shorter than " + std::to_string(n) + " tokens");
  const double recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
  if (kind == RougeScore::recall) return recall;
  const double precision = hyp_total ? static_cast<double>(overlap) / static_cast<double>(hyp_total) : 0.0;
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline constexpr double kRougeLBeta = 1.2;

/// Corpus ROUGE-L F-measure: LCS lengths and sentence lengths summed over pairs, beta = 1.2.
inline double rouge_l(const Corpus& hyp, const Corpus& ref, double beta = kRougeLBeta) {
  detail::require_aligned("rouge_l", hyp, ref);
  std::size_t lcs = 0, hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    lcs += detail::lcs_length(hyp[i], ref[i]);
    hyp_len += hyp[i].size();
    ref_len += ref[i].size();
  }
  if (lcs == 0) return 0.0;
  const double r = static_cast<double>(lcs) / static_cast<double>(ref_len);
  const double p = static_cast<double>(lcs) / static_cast<double>(hyp_len);
  const double b2 = beta * beta;
  return (1.0 + b2) * r * p / (r + b2 * p);
}

using ScoreMap = std::map<std::string, double>;

inline ScoreMap score_corpus(const Corpus& hyp, const Corpus& ref) {
  return {{"bleu4", bleu4(hyp, ref)}, {"rouge4", rouge_n(hyp, ref, 4)}, {"rougeL", rouge_l(hyp, ref)}};
}

struct MetricSummary {
  double mean = 0.0;
  std::optional<double> stddev;  ///< sample standard deviation; present with >= 2 seeds
};

struct EvalReport {
  std::vector<std::string> seeds;
  std::vector<ScoreMap> per_seed;
  std::map<std::string, MetricSummary> aggregate;
};

/// Mean and sample standard deviation of each metric across seeds.
inline EvalReport aggregate_seeds(const std::vector<ScoreMap>& reports, std::vector<std::string> seeds = {}) {
  if (reports.empty()) throw SchemaError("aggregate_seeds: no reports");
  if (seeds.empty())
    for (std::size_t i = 0; i < reports.size(); ++i) seeds.push_back(std::to_string(i));
  if (seeds.size() != reports.size()) throw SchemaError("aggregate_seeds: seed labels do not match reports");
  for (const auto& r : reports) {
    bool same = r.size() == reports.front().size();
    for (auto a = r.begin(), b = reports.front().begin(); same && a != r.end(); ++a, ++b) same = a->first == b->first;
    if (!same) throw SchemaError("aggregate_seeds: reports carry different metric keys");
  }
  EvalReport out{std::move(seeds), reports, {}};
  for (const auto& [key, _] : reports.front()) {
    // Welford's running update.
    double mean = 0.0, m2 = 0.0, k = 0.0;
    for (const auto& r : reports) {
      const double x = r.at(key), d = x - mean;
      k += 1.0;
      mean += d / k;
      m2 += d * (x - mean);
    }
    MetricSummary s{mean, std::nullopt};
    if (reports.size() >= 2) s.stddev = std::sqrt(m2 / (k - 1.0));
    out.aggregate.emplace(key, s);
  }
  return out;
}

/// Formats a score already in display units: "46.76 ± 0.03", or "46.76" without a deviation.
inline std::string format_mean_std(double mean, std::optional<double> stddev) {
  char buf[64];
  if (stddev)
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, *stddev);
  else
    std::snprintf(buf, sizeof buf, "%.2f", mean);
  return buf;
}

/// Fractions are shown multiplied by 100.
inline std::string format_summary(const MetricSummary& s) {
  return format_mean_std(100.0 * s.mean, s.stddev ? std::optional<double>(100.0 * *s.stddev) : std::nullopt);
}

/// Flat "key = value" lines, display units.
inline std::string report_text(const EvalReport& r) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < r.per_seed.size(); ++i)
    for (const auto& [k, v] : r.per_seed[i]) {
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
      out += "seed." + r.seeds[i] + "." + k + " = " + buf + "\n";
    }
  for (const auto& [k, s] : r.aggregate) out += "aggregate." + k + " = " + format_summary(s) + "\n";
  return out;
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  j["seeds"] = r.seeds;
  j["per_seed"] = nlohmann::json::array();
  for (std::size_t i = 0; i < r.per_seed.size(); ++i) j["per_seed"].push_back({{"seed", r.seeds[i]}, {"scores", r.per_seed[i]}});
  for (const auto& [k, s] : r.aggregate) {
    nlohmann::json a = {{"mean", s.mean}, {"display", format_summary(s)}};
    if (s.stddev) a["std"] = *s.stddev;
    j["aggregate"][k] = a;
  }
  return j;
}

}  // namespace copygen
