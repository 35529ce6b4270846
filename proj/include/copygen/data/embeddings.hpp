// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <copygen/core/tensor.hpp>
#include <copygen/data/text.hpp>
#include <copygen/data/vocab.hpp>

#include <charconv>
#include <cstdint>

namespace copygen {

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/**
 * Loads a GloVe-style text file ("token v1 ... v_dim" per line) into a
 * |vocab| x dim matrix. Rows of tokens missing from the file are drawn from
 * uniform(-0.1, 0.1). The result does not require gradients.
 */
inline Tensor load_pretrained_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t dim,
                                         std::uint64_t seed = 0) {
  Tensor table(Shape{vocab.size(), dim});
  std::mt19937_64 rng(seed);
  uniform_fill(table, -0.1, 0.1, rng);
  const auto lines = read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto parts = split_whitespace(lines[ln]);
    if (parts.empty()) continue;
    if (parts.size() != dim + 1)
      throw FormatError("expected " + std::to_string(dim) + " values, found " + std::to_string(parts.size() - 1), ln + 1);
    if (!vocab.contains(parts[0])) continue;
    auto dst = table.row(static_cast<std::size_t>(vocab.id(parts[0])));
    for (std::size_t k = 0; k < dim; ++k) {
      const auto& s = parts[k + 1];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("malformed number '" + s + "'", ln + 1);
      dst[k] = v;
    }
  }
  table.set_requires_grad(false);
  return table;
}

}  // namespace copygen
