#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/embedding.hpp"
#include "entlm/types.hpp"

namespace entlm {

// Finds entity mentions in one field's text.
class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual std::vector<EntitySpan> tag(std::string_view text, FieldTag field) const = 0;
};

// Dictionary tagger: longest gazetteer match at word boundaries, scanning
// left to right. Case-sensitive. Stands in for a statistical NER model.
class GazetteerTagger : public Tagger {
 public:
  explicit GazetteerTagger(const std::vector<Entity>& entries) {
    nodes_.emplace_back();
    for (const auto& e : entries) add(e);
  }

  void add(const Entity& e) {
    if (e.surface.empty()) return;
    std::size_t node = 0;
    for (char c : e.surface) {
      auto& kids = nodes_[node].children;
      auto it = kids.find(c);
      if (it == kids.end()) {
        const std::size_t next = nodes_.size();
        kids.emplace(c, next);
        nodes_.emplace_back();
        node = next;
      } else {
        node = it->second;
      }
    }
    if (!nodes_[node].category) nodes_[node].category = e.category;
  }

  std::vector<EntitySpan> tag(std::string_view text, FieldTag field) const override {
    std::vector<EntitySpan> spans;
    const std::size_t n = text.size();
    auto boundary = [&](std::size_t pos) {
      // A match may not start or end in the middle of a word.
      if (pos == 0 || pos == n) return true;
      return !(is_word_byte(text[pos - 1]) && is_word_byte(text[pos]));
    };
    std::size_t i = 0;
    while (i < n) {
      if (!boundary(i)) {
        ++i;
        continue;
      }
      std::size_t node = 0;
      std::size_t best_end = 0;
      EntityCategory best_cat{};
      for (std::size_t j = i; j < n; ++j) {
        auto it = nodes_[node].children.find(text[j]);
        if (it == nodes_[node].children.end()) break;
        node = it->second;
        if (nodes_[node].category && boundary(j + 1)) {
          best_end = j + 1;
          best_cat = *nodes_[node].category;
        }
      }
      if (best_end > i) {
        spans.push_back({field, i, best_end, std::string(text.substr(i, best_end - i)), best_cat});
        i = best_end;
      } else {
        ++i;
      }
    }
    return spans;
  }

 private:
  struct Node {
    std::map<char, std::size_t> children;
    std::optional<EntityCategory> category;
  };
  std::vector<Node> nodes_;
};

inline std::vector<EntitySpan> tag_entities(std::string_view text, const Tagger& tagger,
                                            FieldTag field = FieldTag::kBody) {
  return tagger.tag(text, field);
}

// Mentions across every populated field, in field-scan then offset order.
// Spans supplied with the article take precedence over the tagger.
inline std::vector<EntitySpan> article_spans(const Article& a, const Tagger* tagger) {
  if (a.oracle_entities) return *a.oracle_entities;
  std::vector<EntitySpan> out;
  if (!tagger) return out;
  for (FieldTag t : kAllFields) {
    if (!a.has(t)) continue;
    auto spans = tagger->tag(a.text(t), t);
    out.insert(out.end(), spans.begin(), spans.end());
  }
  return out;
}

inline EntityList dedup_entities(const std::vector<EntitySpan>& spans) {
  EntityList out;
  std::set<EntityKey> seen;
  for (const auto& s : spans) {
    Entity e{s.surface, s.category, {}};
    if (seen.insert(entity_key(e)).second) out.push_back(std::move(e));
  }
  return out;
}

inline EntityList oracle_entities(const Article& a, const Tagger* tagger) {
  return dedup_entities(article_spans(a, tagger));
}

// Entities mentioned in one field only (the caption for CapNE).
inline EntityList field_entities(const Article& a, FieldTag field, const Tagger* tagger) {
  std::vector<EntitySpan> spans;
  for (auto& s : article_spans(a, tagger)) {
    if (s.field == field) spans.push_back(s);
  }
  return dedup_entities(spans);
}

// Candidate entities for visual NER, with optional cached text embeddings.
class CandidateIndex {
 public:
  CandidateIndex() = default;
  explicit CandidateIndex(EntityList entries) : entries_(std::move(entries)) {}

  const EntityList& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool has_embeddings() const { return !embeddings_.empty(); }
  const std::vector<std::vector<float>>& embeddings() const { return embeddings_; }

  // Embeds each candidate's bare surface string with `provider`.
  void embed(const EmbeddingProvider& provider) {
    embeddings_.clear();
    const std::size_t batch = std::max<std::size_t>(1, provider.max_batch());
    for (std::size_t i = 0; i < entries_.size(); i += batch) {
      EmbedRequest req{EmbedKind::kText, {}};
      for (std::size_t j = i; j < std::min(entries_.size(), i + batch); ++j) {
        req.items.push_back(entries_[j].surface);
      }
      auto res = provider.embed(req);
      if (res.vectors.size() != req.items.size()) {
        throw TransportError("provider returned a different number of vectors");
      }
      for (auto& v : res.vectors) {
        if (v.size() != provider.dim()) throw ContractError("candidate embedding dimension mismatch");
        embeddings_.push_back(std::move(v));
      }
    }
    dim_ = provider.dim();
  }

  std::size_t dim() const { return dim_; }

  // Subset whose keys appear in `allowed`, keeping index order.
  CandidateIndex restricted(const std::set<EntityKey>& allowed) const {
    CandidateIndex out;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!allowed.count(entity_key(entries_[i]))) continue;
      out.entries_.push_back(entries_[i]);
      if (has_embeddings()) out.embeddings_.push_back(embeddings_[i]);
    }
    out.dim_ = dim_;
    return out;
  }

 private:
  EntityList entries_;
  std::vector<std::vector<float>> embeddings_;
  std::size_t dim_ = 0;
};

// Union of oracle entities over the corpus, sorted by (surface, category).
inline CandidateIndex build_candidate_index(const std::vector<Article>& corpus,
                                            const Tagger* tagger) {
  EntityList all;
  for (const auto& a : corpus) {
    auto ents = oracle_entities(a, tagger);
    all.insert(all.end(), ents.begin(), ents.end());
  }
  std::stable_sort(all.begin(), all.end(), [](const Entity& x, const Entity& y) {
    if (x.surface != y.surface) return x.surface < y.surface;
    return x.category < y.category;
  });
  EntityList unique;
  std::set<EntityKey> seen;
  for (auto& e : all) {
    if (seen.insert(entity_key(e)).second) unique.push_back(std::move(e));
  }
  return CandidateIndex(std::move(unique));
}

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw ContractError("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

// Top-k candidates by cosine similarity between the image embedding and each
// candidate's text embedding. Ties keep index order. Scores are attached.
inline EntityList visual_ner(const std::string& image_ref, const CandidateIndex& index,
                             const EmbeddingProvider& provider, std::size_t k) {
  if (k == 0) throw ContractError("visual_ner: k must be at least 1");
  if (index.empty()) throw ContractError("visual_ner: empty candidate index");

  const CandidateIndex* idx = &index;
  CandidateIndex local;
  if (!index.has_embeddings()) {
    local = index;
    local.embed(provider);
    idx = &local;
  }
  auto res = provider.embed({EmbedKind::kImage, {image_ref}});
  if (res.vectors.size() != 1) throw TransportError("provider returned no image vector");
  const auto& image = res.vectors.front();
  if (image.size() != idx->dim() || image.size() != provider.dim()) {
    throw ContractError("visual_ner: image and candidate embedding dimensions differ");
  }

  std::vector<double> scores(idx->size());
  for (std::size_t i = 0; i < idx->size(); ++i) scores[i] = cosine(image, idx->embeddings()[i]);
  std::vector<std::size_t> order(idx->size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  EntityList out;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    Entity e = idx->entries()[order[r]];
    e.score = scores[order[r]];
    out.push_back(std::move(e));
  }
  return out;
}

// |predicted ∩ oracle| / |oracle| on (case-folded surface, category).
inline double ner_recall(const EntityList& predicted, const EntityList& oracle) {
  std::set<EntityKey> truth;
  for (const auto& e : oracle) truth.insert(entity_key(e));
  if (truth.empty()) throw ContractError("ner_recall: oracle entity list is empty");
  std::set<EntityKey> hit;
  for (const auto& e : predicted) {
    auto key = entity_key(e);
    if (truth.count(key)) hit.insert(key);
  }
  return static_cast<double>(hit.size()) / static_cast<double>(truth.size());
}

}  // namespace entlm
