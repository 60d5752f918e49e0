#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "entlm/corpus.hpp"
#include "entlm/embedding.hpp"
#include "entlm/evalsuite.hpp"
#include "entlm/ner.hpp"
#include "entlm/serializer.hpp"

namespace entlm {

enum class RetrievalMode { kTextOnly, kNe, kNeEa };

inline std::string_view retrieval_mode_name(RetrievalMode m) {
  switch (m) {
    case RetrievalMode::kTextOnly: return "text-only";
    case RetrievalMode::kNe: return "ne";
    case RetrievalMode::kNeEa: return "ne-ea";
  }
  return "text-only";
}

inline RetrievalMode parse_retrieval_mode(std::string_view s) {
  if (s == "text-only") return RetrievalMode::kTextOnly;
  if (s == "ne") return RetrievalMode::kNe;
  if (s == "ne-ea") return RetrievalMode::kNeEa;
  throw ContractError("unknown retrieval mode '" + std::string(s) + "'");
}

namespace detail {

// Largest cut <= limit that ends at whitespace (or the end of `s`), falling
// back to a UTF-8 character boundary when the first word alone is too long.
inline std::size_t whitespace_cut(std::string_view s, std::size_t limit) {
  if (s.size() <= limit) return s.size();
  for (std::size_t c = limit; c > 0; --c) {
    if (is_ascii_space(s[c])) {
      std::size_t e = c;
      while (e > 0 && is_ascii_space(s[e - 1])) --e;
      if (e > 0) return e;
    }
  }
  std::size_t c = limit;
  while (c > 0 && (static_cast<unsigned char>(s[c]) & 0xC0) == 0x80) --c;
  return c;
}

}  // namespace detail

// Provider input for one article: the entity surfaces (ne modes), then the
// title and body. ne-ea also annotates title and body mentions. At most
// `limit` characters of un-annotated text are kept, cut at whitespace, so
// annotation never changes which text survives.
inline std::string build_text_input(const Article& a, RetrievalMode mode, const EntityList& entities,
                                    const std::vector<EntitySpan>& spans, std::size_t limit) {
  std::string plain;
  // (offset into plain, category) for each annotation.
  std::vector<std::pair<std::size_t, EntityCategory>> marks;
  if (mode != RetrievalMode::kTextOnly && !entities.empty()) {
    for (std::size_t i = 0; i < entities.size(); ++i) {
      if (i) plain += "; ";
      plain += entities[i].surface;
    }
    plain += ' ';
  }
  auto append_field = [&](FieldTag t) {
    if (!a.has(t)) return;
    if (!plain.empty() && plain.back() != ' ') plain += ' ';
    const std::size_t base = plain.size();
    plain += a.text(t);
    if (mode != RetrievalMode::kNeEa) return;
    for (const auto& s : spans) {
      if (s.field == t) marks.emplace_back(base + s.end, s.category);
    }
  };
  append_field(FieldTag::kTitle);
  append_field(FieldTag::kBody);
  while (!plain.empty() && plain.back() == ' ') plain.pop_back();

  const std::size_t cut = detail::whitespace_cut(plain, limit);
  std::stable_sort(marks.begin(), marks.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  std::string out;
  std::size_t pos = 0;
  for (const auto& [at, cat] : marks) {
    if (at > cut) break;
    out.append(plain, pos, at - pos);
    out += ' ';
    out += category_literal(cat);
    pos = at;
  }
  out.append(plain, pos, cut - pos);
  return out;
}

// Embeds `items` in provider-sized chunks, preserving order. Every vector
// comes back unit-norm with one shared dimension.
inline std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& items, EmbedKind kind,
                                                   const EmbeddingProvider& provider) {
  if (items.empty()) throw ContractError("embed_batch: empty batch");
  std::vector<std::vector<float>> out;
  out.reserve(items.size());
  const std::size_t chunk = std::max<std::size_t>(1, provider.max_batch());
  std::size_t dim = 0;
  for (std::size_t i = 0; i < items.size(); i += chunk) {
    EmbedRequest req{kind, {items.begin() + static_cast<std::ptrdiff_t>(i),
                            items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + chunk))}};
    auto res = provider.embed(req);
    if (res.vectors.size() != req.items.size()) {
      throw TransportError("provider returned " + std::to_string(res.vectors.size()) + " vectors for " +
                           std::to_string(req.items.size()) + " items");
    }
    for (auto& v : res.vectors) {
      if (dim == 0) dim = v.size();
      if (v.size() != dim || dim == 0) throw TransportError("embedding dimension drifted within a batch");
      normalize_in_place(v);
      out.push_back(std::move(v));
    }
  }
  return out;
}

// queries x targets matrix of dot products (cosines for unit vectors).
inline Eigen::MatrixXd rank(const std::vector<std::vector<float>>& queries,
                            const std::vector<std::vector<float>>& targets) {
  const std::size_t dim = queries.empty() ? (targets.empty() ? 0 : targets[0].size()) : queries[0].size();
  auto load = [&](const std::vector<std::vector<float>>& vs) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vs.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (vs[i].size() != dim) throw ContractError("rank: embedding dimensions differ");
      for (std::size_t d = 0; d < dim; ++d) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = vs[i][d];
      }
    }
    return m;
  };
  const Eigen::MatrixXd q = load(queries);
  const Eigen::MatrixXd t = load(targets);
  return q * t.transpose();
}

struct RetrievalEntry {
  std::string mode;
  std::string direction;  // "image-to-article" or "article-to-image"
  std::size_t k;
  double recall;
  std::size_t n;
  std::uint64_t seed;
};

struct RetrievalReport {
  std::vector<RetrievalEntry> entries;
  std::vector<std::string> sample_ids;

  double recall(std::string_view direction, std::size_t k) const {
    for (const auto& e : entries) {
      if (e.direction == direction && e.k == k) return e.recall;
    }
    throw ContractError("no recall entry for " + std::string(direction) + " @" + std::to_string(k));
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
      arr.push_back({{"mode", e.mode}, {"direction", e.direction}, {"k", e.k}, {"recall", e.recall},
                     {"n", e.n}, {"seed", e.seed}});
    }
    return arr;
  }
};

// Seeded sample of `n` article indices (all of them when n is 0 or too big),
// in sample order.
inline std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(splitmix64(seed ^ 0x5a3b1e00ULL));
  rng.shuffle(idx);
  if (n != 0 && n < total) idx.resize(n);
  return idx;
}

// Recall@K in both directions over a seeded sample, pairing each article
// with its first image.
inline RetrievalReport evaluate_retrieval(const std::vector<Article>& corpus, RetrievalMode mode,
                                          const EmbeddingProvider& provider, const std::vector<std::size_t>& ks,
                                          std::uint64_t seed, std::size_t sample = 0,
                                          const Tagger* tagger = nullptr) {
  const auto picks = sample_indices(corpus.size(), sample, seed);
  if (picks.empty()) throw ContractError("evaluate_retrieval: empty sample");
  RetrievalReport report;
  std::vector<std::string> texts, images;
  for (std::size_t i : picks) {
    const Article& a = corpus[i];
    if (a.image_refs.empty()) throw ContractError("article '" + a.id + "' has no image");
    const auto spans = article_spans(a, tagger);
    const EntityList ents = mode == RetrievalMode::kTextOnly ? EntityList{} : dedup_entities(spans);
    texts.push_back(build_text_input(a, mode, ents, spans, provider.text_limit()));
    images.push_back(a.image_refs.front());
    report.sample_ids.push_back(a.id);
  }
  const auto tv = embed_batch(texts, EmbedKind::kText, provider);
  const auto iv = embed_batch(images, EmbedKind::kImage, provider);
  const Eigen::MatrixXd i2a = rank(iv, tv);
  const auto r_i2a = recall_at_k(i2a, ks);
  const auto r_a2i = recall_at_k(i2a.transpose(), ks);
  const std::string m(retrieval_mode_name(mode));
  for (std::size_t k : ks) {
    report.entries.push_back({m, "image-to-article", k, r_i2a.at(k), picks.size(), seed});
  }
  for (std::size_t k : ks) {
    report.entries.push_back({m, "article-to-image", k, r_a2i.at(k), picks.size(), seed});
  }
  return report;
}

}  // namespace entlm
