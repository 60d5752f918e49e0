#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/embedding.hpp"
#include "entlm/ner.hpp"
#include "entlm/serializer.hpp"
#include "entlm/types.hpp"

namespace entlm {

// Where the named-entity field comes from.
enum class EntitySource { kNone, kOracle, kCaption, kClip };

inline std::string_view entity_source_name(EntitySource s) {
  switch (s) {
    case EntitySource::kNone: return "none";
    case EntitySource::kOracle: return "oracle";
    case EntitySource::kCaption: return "caption";
    case EntitySource::kClip: return "clip";
  }
  return "none";
}

inline EntitySource parse_entity_source(std::string_view s) {
  if (s == "none") return EntitySource::kNone;
  if (s == "oracle") return EntitySource::kOracle;
  if (s == "caption") return EntitySource::kCaption;
  if (s == "clip") return EntitySource::kClip;
  throw ContractError("unknown entity source '" + std::string(s) + "'");
}

// How one experiment arm turns articles into training text.
struct DocConfig {
  std::string name;
  CanonicalOrder order;
  EntitySource source = EntitySource::kNone;
  AnnotationScope scope = AnnotationScope::kNone;
  std::size_t k = 10;  // entities kept from visual NER

  std::string fingerprint() const {
    return name + "|" + order.to_string() + "|" + std::string(entity_source_name(source)) + "|" +
           std::string(scope_name(scope)) + "|k=" + std::to_string(k);
  }
};

// The ablation arms over the goodnews field set: text only, caption,
// caption with annotation, and the three entity-list sources.
inline std::vector<DocConfig> field_ablation_configs(std::size_t k = 10) {
  const CanonicalOrder full = canonical_order("goodnews");
  const CanonicalOrder no_ne = full.without({FieldTag::kNamedEntity});
  const CanonicalOrder bare = no_ne.without({FieldTag::kCaption});
  const auto ea = AnnotationScope::kNarrative;
  return {
      {"Text-only", bare, EntitySource::kNone, AnnotationScope::kNone, k},
      {"+Cap", no_ne, EntitySource::kNone, AnnotationScope::kNone, k},
      {"+Cap+EA", no_ne, EntitySource::kNone, ea, k},
      {"+CapNE", full, EntitySource::kCaption, ea, k},
      {"+ClipNE", full, EntitySource::kClip, ea, k},
      {"+NE", full, EntitySource::kOracle, ea, k},
  };
}

inline DocConfig find_config(const std::vector<DocConfig>& configs, std::string_view name) {
  for (const auto& c : configs) {
    if (c.name == name) return c;
  }
  throw ContractError("no experiment config named '" + std::string(name) + "'");
}

// Shared resources for building documents.
struct PipelineContext {
  const Tagger* tagger = nullptr;
  // Needed only for the clip source.
  const EmbeddingProvider* provider = nullptr;
  const CandidateIndex* candidates = nullptr;
};

inline EntityList entities_for(const Article& a, const DocConfig& cfg, const PipelineContext& ctx) {
  switch (cfg.source) {
    case EntitySource::kNone: return {};
    case EntitySource::kOracle: return oracle_entities(a, ctx.tagger);
    case EntitySource::kCaption: return field_entities(a, FieldTag::kCaption, ctx.tagger);
    case EntitySource::kClip: {
      if (cfg.k == 0 || a.image_refs.empty()) return {};
      if (!ctx.provider || !ctx.candidates) {
        throw ContractError("clip entity source requires an embedding provider and candidate index");
      }
      auto ents = visual_ner(a.image_refs.front(), *ctx.candidates, *ctx.provider, cfg.k);
      for (auto& e : ents) e.score.reset();
      return ents;
    }
  }
  return {};
}

inline AnnotatedDocument build_document(const Article& a, const DocConfig& cfg,
                                        const PipelineContext& ctx) {
  const EntityList ents = entities_for(a, cfg, ctx);
  FieldSpans spans;
  if (cfg.scope != AnnotationScope::kNone) spans = group_spans(article_spans(a, ctx.tagger));
  return serialize_document(a, cfg.order, ents, spans, cfg.scope);
}

inline std::vector<AnnotatedDocument> build_documents(const std::vector<Article>& articles,
                                                      const DocConfig& cfg,
                                                      const PipelineContext& ctx) {
  std::vector<AnnotatedDocument> out;
  out.reserve(articles.size());
  for (const auto& a : articles) out.push_back(build_document(a, cfg, ctx));
  return out;
}

inline std::vector<std::string> serialized(const std::vector<AnnotatedDocument>& docs) {
  std::vector<std::string> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.serialized);
  return out;
}

// Superset serialization used to train one tokenizer shared by every arm:
// every field, the oracle entity list and narrative annotation.
inline std::vector<std::string> tokenizer_training_texts(const std::vector<Article>& articles,
                                                         const PipelineContext& ctx) {
  std::vector<FieldTag> tags(kAllFields.begin(), kAllFields.end());
  const DocConfig superset{"superset", CanonicalOrder(tags), EntitySource::kOracle,
                           AnnotationScope::kNarrative, 0};
  return serialized(build_documents(articles, superset, ctx));
}

}  // namespace entlm
