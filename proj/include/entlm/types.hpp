#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/error.hpp"
#include "entlm/util.hpp"

namespace entlm {

// Typed article segments. Enumerator order is also the order in which
// fields are scanned for entities.
enum class FieldTag : std::uint8_t {
  kDomain,
  kDate,
  kTopic,
  kNamedEntity,
  kTitle,
  kCaption,
  kSummary,
  kBody,
};

inline constexpr std::size_t kNumFields = 8;

inline constexpr std::array<FieldTag, kNumFields> kAllFields = {
    FieldTag::kDomain,  FieldTag::kDate,    FieldTag::kTopic,
    FieldTag::kNamedEntity, FieldTag::kTitle, FieldTag::kCaption,
    FieldTag::kSummary, FieldTag::kBody};

// User-facing name ("named-entity") as used in presets and configs.
inline std::string_view field_name(FieldTag tag) {
  static constexpr std::array<std::string_view, kNumFields> kNames = {
      "domain", "date",    "topic",   "named-entity",
      "title",  "caption", "summary", "body"};
  return kNames[static_cast<std::size_t>(tag)];
}

// Name inside boundary tokens; named-entity is spelled "entity".
inline std::string_view field_token_name(FieldTag tag) {
  return tag == FieldTag::kNamedEntity ? std::string_view("entity")
                                       : field_name(tag);
}

inline std::optional<FieldTag> parse_field(std::string_view name) {
  for (FieldTag t : kAllFields) {
    if (field_name(t) == name || field_token_name(t) == name) return t;
  }
  return std::nullopt;
}

// Fields holding narrative text that may carry category annotations.
inline bool is_narrative_field(FieldTag tag) {
  return tag == FieldTag::kTitle || tag == FieldTag::kCaption ||
         tag == FieldTag::kSummary || tag == FieldTag::kBody;
}

// OntoNotes-style entity categories.
enum class EntityCategory : std::uint8_t {
  kPerson,
  kOrg,
  kGpe,
  kLoc,
  kDate,
  kTime,
  kMoney,
  kPercent,
  kQuantity,
  kOrdinal,
  kCardinal,
  kNorp,
  kFac,
  kProduct,
  kEvent,
  kWorkOfArt,
  kLaw,
  kLanguage,
};

inline constexpr std::size_t kNumCategories = 18;

inline std::string_view category_name(EntityCategory c) {
  static constexpr std::array<std::string_view, kNumCategories> kNames = {
      "PERSON",   "ORG",     "GPE",      "LOC",     "DATE",    "TIME",
      "MONEY",    "PERCENT", "QUANTITY", "ORDINAL", "CARDINAL", "NORP",
      "FAC",      "PRODUCT", "EVENT",    "WORK_OF_ART", "LAW", "LANGUAGE"};
  return kNames[static_cast<std::size_t>(c)];
}

inline std::optional<EntityCategory> parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    const auto c = static_cast<EntityCategory>(i);
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

// A mention inside one field's text, addressed by byte offsets.
struct EntitySpan {
  FieldTag field = FieldTag::kBody;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string surface;
  EntityCategory category = EntityCategory::kPerson;

  bool operator==(const EntitySpan&) const = default;
};

struct Entity {
  std::string surface;
  EntityCategory category = EntityCategory::kPerson;
  // Similarity score for visually extracted entities; unset otherwise.
  std::optional<double> score;

  bool operator==(const Entity& o) const {
    return surface == o.surface && category == o.category;
  }
};

// Key used for deduplication and recall matching.
struct EntityKey {
  std::string folded;
  EntityCategory category;

  auto operator<=>(const EntityKey&) const = default;
};

inline EntityKey entity_key(const Entity& e) {
  return {case_fold(e.surface), e.category};
}

using EntityList = std::vector<Entity>;

}  // namespace entlm
