// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Binary persistence of a CheckpointBundle.
 *
 * Layout (all integers little-endian):
 *   8 bytes   magic "CPGCKPT\0"
 *   u32       format version (1)
 *   u64       metadata length M
 *   M bytes   metadata, UTF-8 JSON
 *   u32       CRC-32 of the metadata bytes
 *   payload   raw float64 values, little-endian, in manifest order
 *
 * The metadata holds the configs, vocabularies, counters, history and a
 * tensor manifest; each entry gives name, shape, byte offset into the
 * payload, element count and the CRC-32 of its bytes.
 */
#pragma once

#include <copygen/training/trainer.hpp>

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace copygen {

inline constexpr char kCheckpointMagic[8] = {'C', 'P', 'G', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Cause { io, version, truncated, checksum, format };

  CheckpointError(Cause cause, const std::string& what)
      : std::runtime_error(std::string("checkpoint ") + cause_name(cause) + " error: " + what), cause_(cause) {}
  Cause cause() const { return cause_; }

  static const char* cause_name(Cause c) {
    switch (c) {
      case Cause::io: return "io";
      case Cause::version: return "version";
      case Cause::truncated: return "truncation";
      case Cause::checksum: return "checksum";
      case Cause::format: return "format";
    }
    return "unknown";
  }

 private:
  Cause cause_;
};

namespace detail {

inline std::uint32_t crc32_of(const void* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <class T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline void append_doubles(std::string& out, std::span<const double> xs) {
  for (double x : xs) put_le(out, std::bit_cast<std::uint64_t>(x));
}

inline nlohmann::json record_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch}, {"valid_loss_raw", r.valid_loss_raw}, {"valid_loss_ema", r.valid_loss_ema}};
  j["train_loss"] = r.train_loss ? nlohmann::json(*r.train_loss) : nlohmann::json();
  j["valid_bleu_ema"] = r.valid_bleu_ema ? nlohmann::json(*r.valid_bleu_ema) : nlohmann::json();
  return j;
}

inline EpochRecord record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.valid_loss_raw = j.at("valid_loss_raw").get<double>();
  r.valid_loss_ema = j.at("valid_loss_ema").get<double>();
  if (!j.at("train_loss").is_null()) r.train_loss = j.at("train_loss").get<double>();
  if (!j.at("valid_bleu_ema").is_null()) r.valid_bleu_ema = j.at("valid_bleu_ema").get<double>();
  return r;
}

// Scores may be infinite before any evaluation; JSON has no infinity.
inline nlohmann::json score_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
inline double score_from_json(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace detail

/// Serializes a bundle to the byte layout described above.
inline std::string encode_checkpoint(const CheckpointBundle& b) {
  nlohmann::json meta;
  meta["model"] = b.model;
  meta["train"] = b.train;
  meta["words"] = b.words.tokens();
  meta["fields"] = b.fields.tokens();
  meta["epoch"] = b.epoch;
  meta["step"] = b.optimizer.step;
  meta["ema_decay"] = b.ema.beta;
  meta["valid_score"] = detail::score_json(b.valid_score);
  meta["best_epoch"] = b.best_epoch;
  meta["best_score"] = detail::score_json(b.best_score);
  meta["history"] = nlohmann::json::array();
  for (const auto& r : b.history) meta["history"].push_back(detail::record_json(r));
  for (const auto& [name, p] : b.params) meta["trainable"][name] = p.requires_grad();

  std::string payload;
  nlohmann::json manifest = nlohmann::json::array();
  auto add = [&](const std::string& group, const NamedTensors& ts) {
    for (const auto& [name, t] : ts) {
      const std::size_t offset = payload.size();
      detail::append_doubles(payload, t.values());
      manifest.push_back({{"group", group},
                          {"name", name},
                          {"shape", t.shape()},
                          {"offset", offset},
                          {"count", t.size()},
                          {"crc32", detail::crc32_of(payload.data() + offset, payload.size() - offset)}});
    }
  };
  add("param", b.params);
  add("ema", b.ema.shadow);
  add("optim", b.optimizer.slots);
  meta["tensors"] = std::move(manifest);
  meta["payload_bytes"] = payload.size();

  const std::string m = meta.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, m.size());
  out += m;
  detail::put_le<std::uint32_t>(out, detail::crc32_of(m.data(), m.size()));
  out += payload;
  return out;
}

inline CheckpointBundle decode_checkpoint(std::string_view bytes) {
  using Cause = CheckpointError::Cause;
  constexpr std::size_t header = sizeof kCheckpointMagic + 4 + 8;
  if (bytes.size() < sizeof kCheckpointMagic || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic))
    throw CheckpointError(bytes.size() < sizeof kCheckpointMagic ? Cause::truncated : Cause::format,
                          "missing magic bytes");
  if (bytes.size() < header) throw CheckpointError(Cause::truncated, "header cut short");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 8);
  if (version != kCheckpointVersion)
    throw CheckpointError(Cause::version, "file has format version " + std::to_string(version) + ", reader supports " +
                                              std::to_string(kCheckpointVersion));
  const auto mlen = detail::get_le<std::uint64_t>(bytes.data() + 12);
  if (mlen > bytes.size() || bytes.size() - header < mlen + 4)
    throw CheckpointError(Cause::truncated, "metadata of " + std::to_string(mlen) + " bytes exceeds file");
  const std::string_view m = bytes.substr(header, mlen);
  const auto stored = detail::get_le<std::uint32_t>(bytes.data() + header + mlen);
  if (stored != detail::crc32_of(m.data(), m.size())) throw CheckpointError(Cause::checksum, "metadata CRC mismatch");
  const std::string_view payload = bytes.substr(header + mlen + 4);

  CheckpointBundle b;
  try {
    const auto meta = nlohmann::json::parse(m);
    const auto payload_bytes = meta.at("payload_bytes").get<std::size_t>();
    if (payload.size() < payload_bytes)
      throw CheckpointError(Cause::truncated, "payload has " + std::to_string(payload.size()) + " of " +
                                                  std::to_string(payload_bytes) + " bytes");
    if (payload.size() > payload_bytes) throw CheckpointError(Cause::format, "trailing bytes after payload");
    b.model = meta.at("model").get<ModelConfig>();
    b.train = meta.at("train").get<TrainConfig>();
    auto vocab = [](const nlohmann::json& j) {
      auto toks = j.get<std::vector<std::string>>();
      if (toks.size() < kNumReserved) throw CheckpointError(Cause::format, "vocabulary lacks reserved tokens");
      return Vocabulary(std::vector<std::string>(toks.begin() + kNumReserved, toks.end()));
    };
    b.words = vocab(meta.at("words"));
    b.fields = vocab(meta.at("fields"));
    b.epoch = meta.at("epoch").get<std::size_t>();
    b.optimizer.step = meta.at("step").get<std::uint64_t>();
    b.ema.beta = meta.at("ema_decay").get<double>();
    b.valid_score = detail::score_from_json(meta.at("valid_score"));
    b.best_epoch = meta.at("best_epoch").get<std::size_t>();
    b.best_score = detail::score_from_json(meta.at("best_score"));
    for (const auto& r : meta.at("history")) b.history.push_back(detail::record_from_json(r));

    for (const auto& e : meta.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (shape_size(shape) != count || offset > payload.size() || count > (payload.size() - offset) / 8)
        throw CheckpointError(Cause::format, "manifest entry '" + name + "' is inconsistent");
      const char* p = payload.data() + offset;
      if (detail::crc32_of(p, count * 8) != e.at("crc32").get<std::uint32_t>())
        throw CheckpointError(Cause::checksum, "tensor '" + name + "' CRC mismatch");
      std::vector<double> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(p + 8 * i));
      Tensor t(shape, std::move(v));
      const auto group = e.at("group").get<std::string>();
      if (group == "param") {
        t.set_requires_grad(meta.at("trainable").at(name).get<bool>());
        b.params.emplace(name, std::move(t));
      } else if (group == "ema") {
        b.ema.shadow.emplace(name, std::move(t));
      } else if (group == "optim") {
        b.optimizer.slots.emplace(name, std::move(t));
      } else {
        throw CheckpointError(Cause::format, "unknown tensor group '" + group + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Cause::format, std::string("malformed metadata: ") + e.what());
  }
  return b;
}

inline void save_checkpoint(const CheckpointBundle& b, const std::string& path) {
  const std::string bytes = encode_checkpoint(b);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointError::Cause::io, "cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError(CheckpointError::Cause::io, "write to '" + path + "' failed");
}

inline CheckpointBundle load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Cause::io, "cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace copygen
