#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "entlm/error.hpp"
#include "entlm/special_tokens.hpp"
#include "entlm/types.hpp"
#include "entlm/util.hpp"

namespace entlm {

struct Article {
  std::string id;
  // Text per field. The named-entity field is never stored here; it is
  // rendered from an entity list at serialization time.
  std::map<FieldTag, std::string> fields;
  std::vector<std::string> image_refs;
  std::optional<std::vector<EntitySpan>> oracle_entities;

  bool has(FieldTag t) const {
    auto it = fields.find(t);
    return it != fields.end() && !it->second.empty();
  }
  const std::string& text(FieldTag t) const {
    static const std::string kEmpty;
    auto it = fields.find(t);
    return it == fields.end() ? kEmpty : it->second;
  }

  bool operator==(const Article&) const = default;
};

// Ordered field tags; body is always last.
class CanonicalOrder {
 public:
  CanonicalOrder() = default;
  explicit CanonicalOrder(std::vector<FieldTag> tags) : tags_(std::move(tags)) {
    if (tags_.empty() || tags_.back() != FieldTag::kBody) {
      throw ContractError("canonical order must end with body");
    }
    std::set<FieldTag> seen;
    for (FieldTag t : tags_) {
      if (!seen.insert(t).second) {
        throw ContractError("canonical order repeats field '" +
                            std::string(field_name(t)) + "'");
      }
    }
  }

  const std::vector<FieldTag>& tags() const { return tags_; }
  std::size_t size() const { return tags_.size(); }
  bool contains(FieldTag t) const {
    return std::find(tags_.begin(), tags_.end(), t) != tags_.end();
  }

  bool is_permutation_of(const CanonicalOrder& other) const {
    return std::is_permutation(tags_.begin(), tags_.end(), other.tags_.begin(),
                               other.tags_.end());
  }

  // Same order with `drop` removed.
  CanonicalOrder without(std::initializer_list<FieldTag> drop) const {
    std::vector<FieldTag> kept;
    for (FieldTag t : tags_) {
      if (std::find(drop.begin(), drop.end(), t) == drop.end()) kept.push_back(t);
    }
    return CanonicalOrder(std::move(kept));
  }

  std::string to_string() const {
    std::vector<std::string> names;
    for (FieldTag t : tags_) names.emplace_back(field_name(t));
    return join(names, ",");
  }

  bool operator==(const CanonicalOrder&) const = default;

 private:
  std::vector<FieldTag> tags_;
};

inline CanonicalOrder order_from_names(const std::vector<std::string>& names) {
  std::vector<FieldTag> tags;
  for (const auto& raw : names) {
    const std::string name = trim(raw);
    auto t = parse_field(name);
    if (!t) throw ContractError("unknown field '" + name + "'");
    tags.push_back(*t);
  }
  return CanonicalOrder(std::move(tags));
}

// Presets "goodnews" and "visualnews", or an explicit comma-separated list.
inline CanonicalOrder canonical_order(std::string_view preset) {
  using F = FieldTag;
  if (preset == "goodnews") {
    return CanonicalOrder({F::kDomain, F::kDate, F::kNamedEntity, F::kTitle,
                           F::kCaption, F::kSummary, F::kBody});
  }
  if (preset == "visualnews") {
    return CanonicalOrder({F::kDomain, F::kDate, F::kTopic, F::kNamedEntity,
                           F::kTitle, F::kCaption, F::kBody});
  }
  if (preset.find(',') != std::string_view::npos || parse_field(preset)) {
    return order_from_names(split(preset, ','));
  }
  throw ContractError("unknown canonical order preset '" + std::string(preset) + "'");
}

// ---------------------------------------------------------------------------
// Validation

inline void validate_spans(const Article& a, const std::vector<EntitySpan>& spans) {
  std::map<FieldTag, std::vector<std::pair<std::size_t, std::size_t>>> by_field;
  for (const auto& s : spans) {
    if (s.field == FieldTag::kNamedEntity) {
      throw ValidationError("entity span addresses the named-entity field");
    }
    const std::string& text = a.text(s.field);
    if (!(s.start < s.end && s.end <= text.size())) {
      throw ValidationError("entity span [" + std::to_string(s.start) + "," +
                            std::to_string(s.end) + ") out of range in field " +
                            std::string(field_name(s.field)));
    }
    if (text.compare(s.start, s.end - s.start, s.surface) != 0) {
      throw ValidationError("entity surface '" + s.surface +
                            "' does not match the addressed text");
    }
    by_field[s.field].emplace_back(s.start, s.end);
  }
  for (auto& [field, ranges] : by_field) {
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
      if (ranges[i].first < ranges[i - 1].second) {
        throw ValidationError("overlapping entity spans in field " +
                              std::string(field_name(field)));
      }
    }
  }
}

inline void validate_article(const Article& a) {
  if (a.id.empty()) throw ValidationError("article id is empty");
  if (!a.has(FieldTag::kBody)) throw ValidationError("article '" + a.id + "' has no body");
  if (a.fields.count(FieldTag::kNamedEntity)) {
    throw ValidationError("named-entity field text cannot be stored on an article");
  }
  for (const auto& [tag, text] : a.fields) {
    if (!is_valid_utf8(text)) {
      throw ValidationError("field " + std::string(field_name(tag)) + " is not valid UTF-8");
    }
    if (contains_special_literal(text)) {
      throw ValidationError("field " + std::string(field_name(tag)) +
                            " contains a reserved token literal");
    }
  }
  for (const auto& ref : a.image_refs) {
    if (!is_valid_utf8(ref)) throw ValidationError("image ref is not valid UTF-8");
  }
  if (a.oracle_entities) validate_spans(a, *a.oracle_entities);
}

// ---------------------------------------------------------------------------
// JSONL encoding

inline constexpr std::array<FieldTag, 7> kStoredFields = {
    FieldTag::kDomain, FieldTag::kDate,    FieldTag::kTopic, FieldTag::kTitle,
    FieldTag::kCaption, FieldTag::kSummary, FieldTag::kBody};

inline nlohmann::ordered_json article_to_json(const Article& a) {
  nlohmann::ordered_json j;
  j["id"] = a.id;
  for (FieldTag t : kStoredFields) {
    if (a.has(t)) j[std::string(field_name(t))] = a.text(t);
  }
  if (!a.image_refs.empty()) j["image_refs"] = a.image_refs;
  if (a.oracle_entities) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : *a.oracle_entities) {
      arr.push_back({{"surface", s.surface},
                     {"category", std::string(category_name(s.category))},
                     {"field", std::string(field_name(s.field))},
                     {"start", s.start},
                     {"end", s.end}});
    }
    j["oracle_entities"] = std::move(arr);
  }
  return j;
}

inline Article article_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("line is not a JSON object");
  Article a;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw ValidationError("missing string 'id'");
  a.id = id->get<std::string>();
  for (FieldTag t : kStoredFields) {
    auto it = j.find(std::string(field_name(t)));
    if (it == j.end() || it->is_null()) continue;
    if (it->is_string()) {
      a.fields[t] = it->get<std::string>();
    } else if (t == FieldTag::kCaption && it->is_array()) {
      // Several captions collapse into one field.
      std::vector<std::string> caps;
      for (const auto& c : *it) {
        if (!c.is_string()) throw ValidationError("caption entries must be strings");
        caps.push_back(c.get<std::string>());
      }
      a.fields[t] = join(caps, "; ");
    } else {
      throw ValidationError("field '" + std::string(field_name(t)) + "' must be a string");
    }
    if (a.fields[t].empty()) a.fields.erase(t);
  }
  if (!a.has(FieldTag::kBody)) throw ValidationError("missing required field 'body'");
  if (auto it = j.find("image_refs"); it != j.end()) {
    if (!it->is_array()) throw ValidationError("'image_refs' must be an array");
    for (const auto& r : *it) {
      if (!r.is_string()) throw ValidationError("image refs must be strings");
      a.image_refs.push_back(r.get<std::string>());
    }
  }
  if (auto it = j.find("oracle_entities"); it != j.end()) {
    if (!it->is_array()) throw ValidationError("'oracle_entities' must be an array");
    std::vector<EntitySpan> spans;
    for (const auto& e : *it) {
      if (!e.is_object()) throw ValidationError("oracle entity must be an object");
      EntitySpan s;
      try {
        s.surface = e.at("surface").get<std::string>();
        auto cat = parse_category(e.at("category").get<std::string>());
        if (!cat) throw ValidationError("unknown entity category");
        s.category = *cat;
        auto field = parse_field(e.at("field").get<std::string>());
        if (!field) throw ValidationError("unknown field in oracle entity");
        s.field = *field;
        s.start = e.at("start").get<std::size_t>();
        s.end = e.at("end").get<std::size_t>();
      } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("bad oracle entity: ") + ex.what());
      }
      spans.push_back(std::move(s));
    }
    a.oracle_entities = std::move(spans);
  }
  validate_article(a);
  return a;
}

struct RejectedLine {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<Article> articles;
  std::vector<RejectedLine> rejects;
};

enum class LoadMode { kStrict, kLenient };

// Parses JSONL text. Strict mode throws on the first bad line (ParseError
// for malformed JSON, ValidationError otherwise, both naming the line).
inline LoadResult parse_corpus(std::string_view text, LoadMode mode = LoadMode::kStrict) {
  LoadResult out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    auto reject = [&](const std::string& msg, bool parse_error) {
      if (mode == LoadMode::kStrict) {
        const std::string full = "line " + std::to_string(line_no) + ": " + msg;
        if (parse_error) throw ParseError(full, line_no);
        throw ValidationError(full);
      }
      out.rejects.push_back({line_no, msg});
    };

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      reject(std::string("malformed JSON: ") + e.what(), true);
      continue;
    }
    Article a;
    try {
      a = article_from_json(j);
    } catch (const ValidationError& e) {
      reject(e.what(), false);
      continue;
    }
    if (!ids.insert(a.id).second) {
      reject("duplicate id '" + a.id + "'", false);
      continue;
    }
    out.articles.push_back(std::move(a));
  }
  return out;
}

inline LoadResult load_corpus(const std::string& path, LoadMode mode = LoadMode::kStrict) {
  return parse_corpus(read_file(path), mode);
}

inline std::string format_corpus(const std::vector<Article>& articles) {
  std::string out;
  for (const auto& a : articles) {
    out += article_to_json(a).dump(-1, ' ', false,
                                   nlohmann::json::error_handler_t::strict);
    out += '\n';
  }
  return out;
}

inline void write_corpus(const std::vector<Article>& articles, const std::string& path) {
  write_file(path, format_corpus(articles));
}

// ---------------------------------------------------------------------------
// Splits

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  // Disjoint and covering `articles`.
  void check(const std::vector<Article>& articles) const {
    std::set<std::string> all;
    for (const auto* part : {&train, &validation, &test}) {
      for (const auto& id : *part) {
        if (!all.insert(id).second) throw ContractError("split parts overlap at '" + id + "'");
      }
    }
    if (all.size() != articles.size()) throw ContractError("split does not cover the corpus");
    for (const auto& a : articles) {
      if (!all.count(a.id)) throw ContractError("split misses '" + a.id + "'");
    }
  }
};

// Consecutive split in corpus order.
inline CorpusSplit split_prefix(const std::vector<Article>& articles, std::size_t n_train,
                                std::size_t n_validation) {
  if (n_train + n_validation > articles.size()) {
    throw ContractError("split sizes exceed corpus size");
  }
  CorpusSplit s;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    auto& part = i < n_train ? s.train
                 : i < n_train + n_validation ? s.validation
                                              : s.test;
    part.push_back(articles[i].id);
  }
  return s;
}

// Seeded shuffle, then proportional split.
inline CorpusSplit split_random(const std::vector<Article>& articles, double validation_frac,
                                double test_frac, std::uint64_t seed) {
  if (validation_frac < 0 || test_frac < 0 || validation_frac + test_frac >= 1.0) {
    throw ContractError("split fractions must be non-negative and sum below 1");
  }
  std::vector<std::size_t> idx(articles.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const auto n = articles.size();
  const auto n_val = static_cast<std::size_t>(validation_frac * static_cast<double>(n));
  const auto n_test = static_cast<std::size_t>(test_frac * static_cast<double>(n));
  CorpusSplit s;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& id = articles[idx[r]].id;
    if (r < n_val) s.validation.push_back(id);
    else if (r < n_val + n_test) s.test.push_back(id);
    else s.train.push_back(id);
  }
  return s;
}

inline std::vector<Article> select(const std::vector<Article>& articles,
                                   const std::vector<std::string>& ids) {
  std::map<std::string, const Article*> by_id;
  for (const auto& a : articles) by_id[a.id] = &a;
  std::vector<Article> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("unknown article id '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace entlm
