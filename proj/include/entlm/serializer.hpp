#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/special_tokens.hpp"
#include "entlm/types.hpp"

namespace entlm {

using FieldSpans = std::map<FieldTag, std::vector<EntitySpan>>;

inline FieldSpans group_spans(const std::vector<EntitySpan>& spans) {
  FieldSpans out;
  for (const auto& s : spans) out[s.field].push_back(s);
  return out;
}

// Inserts " <|CAT|>" right after each mention. Spans must lie inside `text`
// and must not overlap.
inline std::string annotate(std::string_view text, std::vector<EntitySpan> spans) {
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (!(s.start < s.end && s.end <= text.size())) {
      throw ContractError("annotate: span [" + std::to_string(s.start) + "," +
                          std::to_string(s.end) + ") out of range");
    }
    if (i > 0 && s.start < spans[i - 1].end) throw ContractError("annotate: overlapping spans");
  }
  std::string out(text);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    out.insert(it->end, " " + category_literal(it->category));
  }
  return out;
}

// Removes every " <|CAT|>" for known categories.
inline std::string strip_annotations(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  const auto& toks = special_tokens();
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == ' ' && i + 1 < text.size()) {
      if (auto idx = match_special_at(text, i + 1);
          idx && toks[*idx].kind == SpecialKind::kCategory) {
        i += 1 + toks[*idx].literal.size();
        continue;
      }
    }
    out += text[i++];
  }
  return out;
}

// Which fields receive category annotations.
enum class AnnotationScope { kNone, kBody, kNarrative };

inline bool scope_covers(AnnotationScope scope, FieldTag t) {
  switch (scope) {
    case AnnotationScope::kNone: return false;
    case AnnotationScope::kBody: return t == FieldTag::kBody;
    case AnnotationScope::kNarrative: return is_narrative_field(t);
  }
  return false;
}

inline std::string_view scope_name(AnnotationScope s) {
  switch (s) {
    case AnnotationScope::kNone: return "none";
    case AnnotationScope::kBody: return "body";
    case AnnotationScope::kNarrative: return "narrative";
  }
  return "none";
}

inline AnnotationScope parse_scope(std::string_view s) {
  if (s == "none") return AnnotationScope::kNone;
  if (s == "body") return AnnotationScope::kBody;
  if (s == "narrative") return AnnotationScope::kNarrative;
  throw ContractError("unknown annotation scope '" + std::string(s) + "'");
}

// "surface <|CAT|>" entries joined by "; ".
inline std::string render_entity_field(const EntityList& entities) {
  std::string out;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (i) out += "; ";
    out += entities[i].surface;
    out += ' ';
    out += category_literal(entities[i].category);
  }
  return out;
}

inline EntityList parse_entity_field(std::string_view content) {
  EntityList out;
  if (content.empty()) return out;
  std::size_t start = 0;
  while (start <= content.size()) {
    auto end = content.find("; ", start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view item = content.substr(start, end - start);
    const auto sp = item.rfind(' ');
    std::optional<std::size_t> idx;
    if (sp != std::string_view::npos) idx = match_special_at(item, sp + 1);
    if (!idx || special_tokens()[*idx].kind != SpecialKind::kCategory ||
        sp + 1 + special_tokens()[*idx].literal.size() != item.size()) {
      throw ParseError("entity field item lacks a category token", start);
    }
    out.push_back({std::string(item.substr(0, sp)), special_tokens()[*idx].category, {}});
    if (end == content.size()) break;
    start = end + 2;
  }
  return out;
}

// One serialized article and how it was produced.
struct AnnotatedDocument {
  std::string id;
  std::map<FieldTag, std::string> fields;  // as serialized (annotated)
  std::string serialized;
  CanonicalOrder order;
  EntityList entities;
  AnnotationScope scope = AnnotationScope::kNone;
};

// "<start-τ> content <end-τ>" blocks in canonical order, single-space
// separated. Absent fields are skipped; the named-entity field renders
// `entities` and is skipped when the list is empty.
inline AnnotatedDocument serialize_document(const Article& article, const CanonicalOrder& order,
                                            const EntityList& entities, const FieldSpans& spans,
                                            AnnotationScope scope) {
  if (order.size() == 0 || order.tags().back() != FieldTag::kBody) {
    throw ContractError("serialize: order lacks body");
  }
  AnnotatedDocument doc;
  doc.id = article.id;
  doc.order = order;
  doc.entities = entities;
  doc.scope = scope;
  for (FieldTag t : order.tags()) {
    std::string content;
    if (t == FieldTag::kNamedEntity) {
      if (entities.empty()) continue;
      content = render_entity_field(entities);
    } else {
      if (!article.has(t)) continue;
      content = article.text(t);
      if (scope_covers(scope, t)) {
        auto it = spans.find(t);
        if (it != spans.end()) content = annotate(content, it->second);
      }
    }
    if (!doc.serialized.empty()) doc.serialized += ' ';
    doc.serialized += field_start_literal(t);
    doc.serialized += ' ';
    doc.serialized += content;
    doc.serialized += ' ';
    doc.serialized += field_end_literal(t);
    doc.fields[t] = std::move(content);
  }
  return doc;
}

inline std::string serialize(const Article& article, const CanonicalOrder& order,
                             const EntityList& entities, const FieldSpans& spans = {},
                             AnnotationScope scope = AnnotationScope::kNone) {
  return serialize_document(article, order, entities, spans, scope).serialized;
}

// Serialized prefix up to and including "<start-body>", the conditioning
// context for body generation.
inline std::string body_context(const std::string& serialized) {
  const std::string start = field_start_literal(FieldTag::kBody);
  const auto pos = serialized.find(start);
  if (pos == std::string::npos) throw ContractError("serialized document has no body");
  return serialized.substr(0, pos + start.size());
}

struct ParsedStream {
  std::map<FieldTag, std::string> fields;
  // Set when the stream ends inside this field.
  std::optional<FieldTag> truncated;
};

// Inverse of serialize for well-formed streams; tolerates a missing final
// end token. Category tokens are kept in the field text.
inline ParsedStream parse_generated(std::string_view stream) {
  ParsedStream out;
  const auto& toks = special_tokens();
  std::optional<FieldTag> open;
  std::size_t content_start = 0;
  auto take = [&](std::size_t from, std::size_t to, bool strip_tail) {
    std::string_view c = stream.substr(from, to - from);
    if (!c.empty() && c.front() == ' ') c.remove_prefix(1);
    if (strip_tail && !c.empty() && c.back() == ' ') c.remove_suffix(1);
    return std::string(c);
  };
  std::size_t pos = 0;
  while ((pos = stream.find('<', pos)) != std::string_view::npos) {
    auto idx = match_special_at(stream, pos);
    if (!idx || (toks[*idx].kind != SpecialKind::kFieldStart &&
                 toks[*idx].kind != SpecialKind::kFieldEnd)) {
      ++pos;
      continue;
    }
    const auto& tok = toks[*idx];
    if (tok.kind == SpecialKind::kFieldStart) {
      if (open) {
        throw ParseError("start of field '" + std::string(field_name(tok.field)) +
                             "' inside open field '" + std::string(field_name(*open)) + "'",
                         pos);
      }
      open = tok.field;
      content_start = pos + tok.literal.size();
    } else {
      if (!open || *open != tok.field) {
        throw ParseError("end of field '" + std::string(field_name(tok.field)) +
                             "' without matching start",
                         pos);
      }
      if (out.fields.count(tok.field)) {
        throw ParseError("field '" + std::string(field_name(tok.field)) + "' repeated", pos);
      }
      out.fields[tok.field] = take(content_start, pos, true);
      open.reset();
    }
    pos += tok.literal.size();
  }
  if (open) {
    out.fields[*open] = take(content_start, stream.size(), false);
    out.truncated = open;
  }
  return out;
}

}  // namespace entlm
