#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "entlm/error.hpp"
#include "entlm/special_tokens.hpp"
#include "entlm/util.hpp"

namespace entlm {

using TokenId = std::int32_t;

// Token ids plus per-token masks derived from the boundary structure.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::optional<FieldTag>> field_mask;
  // True iff the token is a category special token.
  std::vector<std::uint8_t> category_mask;
  // Category tokens plus the lone space token the annotation inserted
  // in front of them.
  std::vector<std::uint8_t> annotation_mask;

  std::size_t size() const { return ids.size(); }
};

namespace detail {

enum class ByteClass { kLetter, kDigit, kSpace, kOther };

inline ByteClass byte_class(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (is_ascii_space(c)) return ByteClass::kSpace;
  if (u >= '0' && u <= '9') return ByteClass::kDigit;
  if ((u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u >= 0x80) return ByteClass::kLetter;
  return ByteClass::kOther;
}

// Splits plain text into merge domains: an optional single leading space
// followed by a run of letters, digits or punctuation; or a run of
// whitespace (whose last space joins the following word when there is one).
inline std::vector<std::string_view> pretokenize(std::string_view s) {
  std::vector<std::string_view> out;
  const std::size_t n = s.size();
  std::size_t i = 0;
  auto run_end = [&](std::size_t from, ByteClass cls) {
    while (from < n && byte_class(s[from]) == cls) ++from;
    return from;
  };
  while (i < n) {
    const ByteClass cls = byte_class(s[i]);
    if (cls == ByteClass::kSpace) {
      const std::size_t end = run_end(i, ByteClass::kSpace);
      if (end < n && s[end - 1] == ' ') {
        if (end - 1 > i) out.push_back(s.substr(i, end - 1 - i));
        const std::size_t word_end = run_end(end, byte_class(s[end]));
        out.push_back(s.substr(end - 1, word_end - end + 1));
        i = word_end;
      } else {
        out.push_back(s.substr(i, end - i));
        i = end;
      }
    } else {
      const std::size_t end = run_end(i, cls);
      out.push_back(s.substr(i, end - i));
      i = end;
    }
  }
  return out;
}

// Splits `text` into (special id or -1, plain segment) pieces.
inline std::vector<std::pair<int, std::string_view>> split_specials(std::string_view text) {
  std::vector<std::pair<int, std::string_view>> out;
  std::size_t seg_start = 0;
  std::size_t pos = 0;
  while ((pos = text.find('<', pos)) != std::string_view::npos) {
    auto idx = match_special_at(text, pos);
    if (!idx) {
      ++pos;
      continue;
    }
    if (pos > seg_start) out.emplace_back(-1, text.substr(seg_start, pos - seg_start));
    out.emplace_back(static_cast<int>(*idx), std::string_view{});
    pos += special_tokens()[*idx].literal.size();
    seg_start = pos;
  }
  if (seg_start < text.size()) out.emplace_back(-1, text.substr(seg_start));
  return out;
}

inline std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace detail

// Byte-level BPE vocabulary. Id layout: reserved special tokens, then the
// 256 single bytes, then one id per merge, then inert filler ids when the
// training text ran out of repeated pairs.
class Vocab {
 public:
  static constexpr TokenId kFirstByte = static_cast<TokenId>(kNumSpecialTokens);
  static constexpr TokenId kFirstMerge = kFirstByte + 256;

  static Vocab bytes_only() { return Vocab({}, static_cast<std::size_t>(kFirstMerge)); }

  Vocab(std::vector<std::pair<TokenId, TokenId>> merges, std::size_t vocab_size)
      : merges_(std::move(merges)), size_(vocab_size) {
    if (size_ < static_cast<std::size_t>(kFirstMerge) + merges_.size()) {
      throw ContractError("vocab size smaller than reserved + byte + merge tokens");
    }
    tokens_.reserve(size_);
    for (const auto& s : special_tokens()) tokens_.push_back(s.literal);
    for (int b = 0; b < 256; ++b) tokens_.push_back(std::string(1, static_cast<char>(b)));
    for (std::size_t r = 0; r < merges_.size(); ++r) {
      const auto [a, b] = merges_[r];
      const auto next = static_cast<TokenId>(tokens_.size());
      if (a < kFirstByte || b < kFirstByte || a >= next || b >= next) {
        throw IntegrityError("merge rule refers to an invalid token");
      }
      tokens_.push_back(tokens_[a] + tokens_[b]);
      ranks_[detail::pair_key(a, b)] = static_cast<TokenId>(r);
    }
    while (tokens_.size() < size_) tokens_.emplace_back();
  }

  std::size_t size() const { return size_; }
  std::size_t num_merges() const { return merges_.size(); }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }
  const std::string& token_bytes(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  static TokenId special_id(std::size_t special_index) { return static_cast<TokenId>(special_index); }
  static bool is_special(TokenId id) { return id >= 0 && id < kFirstByte; }
  static const SpecialToken& special(TokenId id) { return special_tokens()[static_cast<std::size_t>(id)]; }
  static bool is_boundary(TokenId id) {
    return is_special(id) && (special(id).kind == SpecialKind::kFieldStart ||
                              special(id).kind == SpecialKind::kFieldEnd);
  }
  static bool is_category(TokenId id) {
    return is_special(id) && special(id).kind == SpecialKind::kCategory;
  }
  static TokenId start_id(FieldTag t) {
    return static_cast<TokenId>(2 + 2 * static_cast<std::size_t>(t));
  }
  static TokenId end_id(FieldTag t) { return start_id(t) + 1; }
  static TokenId category_id(EntityCategory c) {
    return static_cast<TokenId>(2 + 2 * kNumFields + static_cast<std::size_t>(c));
  }
  static TokenId pad_id() { return 0; }
  static TokenId unk_id() { return 1; }

  // Applies merges to one pre-token, lowest rank first.
  void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const {
    std::vector<TokenId> sym;
    sym.reserve(chunk.size());
    for (unsigned char c : chunk) sym.push_back(kFirstByte + c);
    while (sym.size() > 1) {
      TokenId best_rank = std::numeric_limits<TokenId>::max();
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
        auto it = ranks_.find(detail::pair_key(sym[i], sym[i + 1]));
        if (it != ranks_.end() && it->second < best_rank) best_rank = it->second;
      }
      if (best_rank == std::numeric_limits<TokenId>::max()) break;
      const auto [a, b] = merges_[static_cast<std::size_t>(best_rank)];
      const TokenId merged = kFirstMerge + best_rank;
      std::size_t w = 0;
      for (std::size_t i = 0; i < sym.size(); ++i) {
        if (i + 1 < sym.size() && sym[i] == a && sym[i + 1] == b) {
          sym[w++] = merged;
          ++i;
        } else {
          sym[w++] = sym[i];
        }
      }
      sym.resize(w);
    }
    out.insert(out.end(), sym.begin(), sym.end());
  }

  TokenSequence encode(std::string_view text) const {
    TokenSequence seq;
    for (const auto& [special, segment] : detail::split_specials(text)) {
      if (special >= 0) {
        seq.ids.push_back(special_id(static_cast<std::size_t>(special)));
      } else {
        for (auto chunk : detail::pretokenize(segment)) encode_chunk(chunk, seq.ids);
      }
    }
    const std::size_t n = seq.ids.size();
    seq.field_mask.resize(n);
    seq.category_mask.assign(n, 0);
    seq.annotation_mask.assign(n, 0);
    std::optional<FieldTag> current;
    const TokenId lone_space = kFirstByte + ' ';
    for (std::size_t i = 0; i < n; ++i) {
      const TokenId id = seq.ids[i];
      if (is_boundary(id)) {
        const auto& tok = special(id);
        seq.field_mask[i] = tok.field;
        current = tok.kind == SpecialKind::kFieldStart ? std::optional<FieldTag>(tok.field)
                                                       : std::nullopt;
        continue;
      }
      seq.field_mask[i] = current;
      if (is_category(id)) {
        seq.category_mask[i] = 1;
        seq.annotation_mask[i] = 1;
        if (i > 0 && seq.ids[i - 1] == lone_space) seq.annotation_mask[i - 1] = 1;
      }
    }
    return seq;
  }

  std::string decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= size_) {
        throw ContractError("decode: token id " + std::to_string(id) + " outside vocabulary");
      }
      out += tokens_[static_cast<std::size_t>(id)];
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["vocab_size"] = size_;
    std::vector<std::string> specials;
    for (const auto& s : special_tokens()) specials.push_back(s.literal);
    j["special"] = specials;
    auto merges = nlohmann::json::array();
    for (const auto& [a, b] : merges_) merges.push_back({a, b});
    j["merges"] = std::move(merges);
    std::vector<std::string> hex;
    hex.reserve(tokens_.size());
    for (const auto& t : tokens_) hex.push_back(to_hex(t));
    j["tokens"] = std::move(hex);
    return j;
  }

  static Vocab from_json(const nlohmann::json& j) {
    try {
      if (j.at("version").get<int>() != 1) throw IntegrityError("unsupported vocab version");
      const auto specials = j.at("special").get<std::vector<std::string>>();
      const auto& expected = special_tokens();
      if (specials.size() != expected.size()) throw IntegrityError("vocab special-token set differs");
      for (std::size_t i = 0; i < specials.size(); ++i) {
        if (specials[i] != expected[i].literal) throw IntegrityError("vocab special-token set differs");
      }
      std::vector<std::pair<TokenId, TokenId>> merges;
      for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<TokenId>(), m.at(1).get<TokenId>());
      Vocab v(std::move(merges), j.at("vocab_size").get<std::size_t>());
      if (j.contains("tokens")) {
        const auto hex = j["tokens"].get<std::vector<std::string>>();
        if (hex.size() != v.size()) throw IntegrityError("vocab token table has wrong length");
        for (std::size_t i = 0; i < hex.size(); ++i) {
          if (from_hex(hex[i]) != v.tokens_[i]) throw IntegrityError("vocab token table inconsistent with merges");
        }
      }
      return v;
    } catch (const nlohmann::json::exception& e) {
      throw IntegrityError(std::string("malformed vocab file: ") + e.what());
    }
  }

  void save(const std::string& path) const { write_file(path, to_json().dump()); }
  static Vocab load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw IntegrityError(std::string("vocab file is not JSON: ") + e.what());
    }
  }

  // Identity of the vocabulary, stored in checkpoints.
  std::uint64_t hash() const {
    std::uint64_t h = fnv1a64("entlm-vocab-v1");
    h = fnv1a64(std::to_string(size_), h);
    for (const auto& s : special_tokens()) h = fnv1a64(s.literal, h);
    for (const auto& [a, b] : merges_) {
      h = fnv1a64(std::to_string(a) + "," + std::to_string(b) + ";", h);
    }
    return h;
  }

 private:
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::size_t size_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::uint64_t, TokenId> ranks_;
};

// Learns merges over pre-tokens of `texts` (special literals excluded).
// The most frequent adjacent pair wins; ties go to the lexicographically
// smaller (left bytes, right bytes). Pairs seen fewer than `min_count` times
// are not merged and the remaining ids are filler.
inline Vocab train_bpe(const std::vector<std::string>& texts, std::size_t vocab_size,
                       std::size_t min_count = 2) {
  const auto base = static_cast<std::size_t>(Vocab::kFirstMerge);
  if (vocab_size < base) {
    throw ContractError("vocab_size " + std::to_string(vocab_size) + " is below the " +
                        std::to_string(base) + " reserved and byte tokens");
  }
  std::unordered_map<std::string, std::int64_t> chunk_counts;
  for (const auto& t : texts) {
    for (const auto& [special, segment] : detail::split_specials(t)) {
      if (special >= 0) continue;
      for (auto chunk : detail::pretokenize(segment)) ++chunk_counts[std::string(chunk)];
    }
  }
  struct Word {
    std::vector<TokenId> sym;
    std::int64_t count;
  };
  std::vector<std::pair<std::string, std::int64_t>> sorted(chunk_counts.begin(), chunk_counts.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<Word> words;
  words.reserve(sorted.size());
  for (const auto& [chunk, count] : sorted) {
    Word w{{}, count};
    for (unsigned char c : chunk) w.sym.push_back(Vocab::kFirstByte + c);
    words.push_back(std::move(w));
  }

  std::vector<std::string> bytes;
  for (const auto& s : special_tokens()) bytes.push_back(s.literal);
  for (int b = 0; b < 256; ++b) bytes.push_back(std::string(1, static_cast<char>(b)));

  std::unordered_map<std::uint64_t, std::int64_t> pair_counts;
  auto add_pairs = [&](const Word& w, std::int64_t sign) {
    for (std::size_t i = 0; i + 1 < w.sym.size(); ++i) {
      auto& c = pair_counts[detail::pair_key(w.sym[i], w.sym[i + 1])];
      c += sign * w.count;
    }
  };
  for (const auto& w : words) add_pairs(w, +1);

  std::vector<std::pair<TokenId, TokenId>> merges;
  const std::size_t max_merges = vocab_size - base;
  while (merges.size() < max_merges) {
    std::uint64_t best = 0;
    std::int64_t best_count = 0;
    for (const auto& [key, count] : pair_counts) {
      if (count < static_cast<std::int64_t>(std::max<std::size_t>(min_count, 1))) continue;
      if (count > best_count) {
        best = key;
        best_count = count;
        continue;
      }
      if (count == best_count) {
        const auto a = static_cast<TokenId>(key >> 32), b = static_cast<TokenId>(key & 0xffffffffu);
        const auto ba = static_cast<TokenId>(best >> 32), bb = static_cast<TokenId>(best & 0xffffffffu);
        if (std::tie(bytes[a], bytes[b]) < std::tie(bytes[ba], bytes[bb])) best = key;
      }
    }
    if (best_count == 0) break;
    const auto a = static_cast<TokenId>(best >> 32), b = static_cast<TokenId>(best & 0xffffffffu);
    const auto merged = static_cast<TokenId>(bytes.size());
    merges.emplace_back(a, b);
    bytes.push_back(bytes[a] + bytes[b]);
    for (auto& w : words) {
      bool has = false;
      for (std::size_t i = 0; i + 1 < w.sym.size(); ++i) {
        if (w.sym[i] == a && w.sym[i + 1] == b) {
          has = true;
          break;
        }
      }
      if (!has) continue;
      add_pairs(w, -1);
      std::size_t out = 0;
      for (std::size_t i = 0; i < w.sym.size(); ++i) {
        if (i + 1 < w.sym.size() && w.sym[i] == a && w.sym[i + 1] == b) {
          w.sym[out++] = merged;
          ++i;
        } else {
          w.sym[out++] = w.sym[i];
        }
      }
      w.sym.resize(out);
      add_pairs(w, +1);
    }
    for (auto it = pair_counts.begin(); it != pair_counts.end();) {
      it = it->second == 0 ? pair_counts.erase(it) : std::next(it);
    }
  }
  return Vocab(std::move(merges), vocab_size);
}

}  // namespace entlm
