#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "entlm/error.hpp"
#include "entlm/lm/config.hpp"
#include "entlm/util.hpp"

namespace entlm::lm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

inline constexpr char kCheckpointMagic[8] = {'E', 'N', 'T', 'L', 'M', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::vector<float> params;
  // Adam moments; empty when not saved.
  std::vector<float> adam_m;
  std::vector<float> adam_v;
  std::uint64_t step = 0;
  std::uint64_t vocab_hash = 0;
  nlohmann::json metadata = nlohmann::json::object();

  bool operator==(const Checkpoint& o) const {
    return config == o.config && step == o.step && vocab_hash == o.vocab_hash &&
           metadata == o.metadata && same_bits(params, o.params) && same_bits(adam_m, o.adam_m) &&
           same_bits(adam_v, o.adam_v);
  }

 private:
  static bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
  }
};

namespace detail {

inline std::string_view float_bytes(const std::vector<float>& v) {
  return {reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float)};
}

}  // namespace detail

// Layout: magic[8], u32 version, u64 header length, JSON header, then the
// parameter floats and, when present, Adam m and v, all little-endian.
inline std::string encode_checkpoint(const Checkpoint& c) {
  const std::size_t n = c.config.num_parameters();
  if (c.params.size() != n) throw ContractError("checkpoint parameter count does not match config");
  const bool has_adam = !c.adam_m.empty();
  if (has_adam && (c.adam_m.size() != n || c.adam_v.size() != n)) {
    throw ContractError("checkpoint optimizer state size mismatch");
  }
  std::string payload(detail::float_bytes(c.params));
  if (has_adam) {
    payload += detail::float_bytes(c.adam_m);
    payload += detail::float_bytes(c.adam_v);
  }
  nlohmann::json header = {
      {"config", to_json(c.config)},
      {"step", c.step},
      {"vocab_hash", hex64(c.vocab_hash)},
      {"num_parameters", n},
      {"optimizer_state", has_adam},
      {"payload_bytes", payload.size()},
      {"payload_fnv1a64", hex64(fnv1a64(payload))},
      {"metadata", c.metadata},
  };
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t hlen = h.size();
  out.append(reinterpret_cast<const char*>(&version), sizeof(version));
  out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out += h;
  out += payload;
  return out;
}

// `expected_vocab_hash` (when given) must match unless `force`.
inline Checkpoint decode_checkpoint(std::string_view bytes,
                                    std::optional<std::uint64_t> expected_vocab_hash = std::nullopt,
                                    bool force = false) {
  constexpr std::size_t kFixed = sizeof(kCheckpointMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < kFixed) throw IntegrityError("checkpoint truncated: missing preamble");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw IntegrityError("not a checkpoint file (bad magic)");
  }
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  std::memcpy(&version, bytes.data() + 8, sizeof(version));
  std::memcpy(&hlen, bytes.data() + 12, sizeof(hlen));
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() - kFixed < hlen) throw IntegrityError("checkpoint truncated inside header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kFixed, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  Checkpoint c;
  c.config = model_config_from_json(header.at("config"));
  c.step = header.at("step").get<std::uint64_t>();
  c.vocab_hash = parse_hex64(header.at("vocab_hash").get<std::string>());
  c.metadata = header.value("metadata", nlohmann::json::object());
  const auto n = header.at("num_parameters").get<std::size_t>();
  if (n != c.config.num_parameters()) throw IntegrityError("checkpoint parameter count disagrees with config");
  const bool has_adam = header.at("optimizer_state").get<bool>();
  const std::size_t expect = n * sizeof(float) * (has_adam ? 3 : 1);
  const std::string_view payload = bytes.substr(kFixed + hlen);
  if (payload.size() < expect) {
    throw IntegrityError("checkpoint truncated: " + std::to_string(payload.size()) + " of " +
                         std::to_string(expect) + " payload bytes");
  }
  if (payload.size() > expect) throw IntegrityError("checkpoint has trailing bytes");
  if (hex64(fnv1a64(payload)) != header.at("payload_fnv1a64").get<std::string>()) {
    throw IntegrityError("checkpoint payload checksum mismatch");
  }
  if (expected_vocab_hash && *expected_vocab_hash != c.vocab_hash && !force) {
    throw VocabMismatchError("checkpoint was trained with vocab " + hex64(c.vocab_hash) +
                             " but tokenizer is " + hex64(*expected_vocab_hash));
  }
  auto read = [&](std::size_t index, std::vector<float>& dst) {
    dst.resize(n);
    std::memcpy(dst.data(), payload.data() + index * n * sizeof(float), n * sizeof(float));
  };
  read(0, c.params);
  if (has_adam) {
    read(1, c.adam_m);
    read(2, c.adam_v);
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  write_file(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::string& path,
                                  std::optional<std::uint64_t> expected_vocab_hash = std::nullopt,
                                  bool force = false) {
  return decode_checkpoint(read_file(path), expected_vocab_hash, force);
}

}  // namespace entlm::lm
