#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/types.hpp"

namespace entlm {

enum class SpecialKind : std::uint8_t { kPad, kUnk, kFieldStart, kFieldEnd, kCategory };

struct SpecialToken {
  std::string literal;
  SpecialKind kind;
  FieldTag field = FieldTag::kBody;                       // boundary tokens
  EntityCategory category = EntityCategory::kPerson;      // category tokens
};

inline std::string field_start_literal(FieldTag t) {
  return "<start-" + std::string(field_token_name(t)) + ">";
}

inline std::string field_end_literal(FieldTag t) {
  return "<end-" + std::string(field_token_name(t)) + ">";
}

inline std::string category_literal(EntityCategory c) {
  return "<|" + std::string(category_name(c)) + "|>";
}

// Reserved tokens in id order: pad, unk, start/end per field, categories.
inline const std::vector<SpecialToken>& special_tokens() {
  static const std::vector<SpecialToken> kTokens = [] {
    std::vector<SpecialToken> v;
    v.push_back({"<|pad|>", SpecialKind::kPad});
    v.push_back({"<|unk|>", SpecialKind::kUnk});
    for (FieldTag t : kAllFields) {
      v.push_back({field_start_literal(t), SpecialKind::kFieldStart, t});
      v.push_back({field_end_literal(t), SpecialKind::kFieldEnd, t});
    }
    for (std::size_t i = 0; i < kNumCategories; ++i) {
      const auto c = static_cast<EntityCategory>(i);
      v.push_back({category_literal(c), SpecialKind::kCategory, FieldTag::kBody, c});
    }
    return v;
  }();
  return kTokens;
}

inline constexpr std::size_t kNumSpecialTokens = 2 + 2 * kNumFields + kNumCategories;

// Finds the special literal beginning at `pos`, if any. Returns its index
// into special_tokens().
inline std::optional<std::size_t> match_special_at(std::string_view text,
                                                   std::size_t pos) {
  if (pos >= text.size() || text[pos] != '<') return std::nullopt;
  const auto& toks = special_tokens();
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (text.substr(pos).starts_with(toks[i].literal)) return i;
  }
  return std::nullopt;
}

inline bool contains_special_literal(std::string_view text) {
  for (std::size_t pos = text.find('<'); pos != std::string_view::npos;
       pos = text.find('<', pos + 1)) {
    if (match_special_at(text, pos)) return true;
  }
  return false;
}

}  // namespace entlm
