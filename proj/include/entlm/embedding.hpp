#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "entlm/error.hpp"
#include "entlm/util.hpp"

namespace entlm {

enum class EmbedKind { kText, kImage };

inline std::string_view embed_kind_name(EmbedKind k) {
  return k == EmbedKind::kText ? "text" : "image";
}

struct EmbedRequest {
  EmbedKind kind = EmbedKind::kText;
  std::vector<std::string> items;
};

struct EmbedResponse {
  std::size_t dim = 0;
  std::vector<std::vector<float>> vectors;
};

// Wire format: {"kind":"text"|"image","items":[...]}.
inline nlohmann::json request_to_json(const EmbedRequest& r) {
  return {{"kind", std::string(embed_kind_name(r.kind))}, {"items", r.items}};
}

inline EmbedRequest request_from_json(const nlohmann::json& j) {
  EmbedRequest r;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "text") r.kind = EmbedKind::kText;
    else if (kind == "image") r.kind = EmbedKind::kImage;
    else throw ParseError("unknown embed kind '" + kind + "'", 0);
    r.items = j.at("items").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed embed request: ") + e.what(), 0);
  }
  return r;
}

// Wire format: {"dim":D,"vectors":[[...],...]}.
inline nlohmann::json response_to_json(const EmbedResponse& r) {
  return {{"dim", r.dim}, {"vectors", r.vectors}};
}

inline EmbedResponse response_from_json(const nlohmann::json& j) {
  EmbedResponse r;
  try {
    r.dim = j.at("dim").get<std::size_t>();
    r.vectors = j.at("vectors").get<std::vector<std::vector<float>>>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed embed response: ") + e.what());
  }
  for (const auto& v : r.vectors) {
    if (v.size() != r.dim) throw TransportError("embed response vector has wrong dimension");
  }
  return r;
}

inline double l2_norm(const std::vector<float>& v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

inline void normalize_in_place(std::vector<float>& v) {
  const double n = l2_norm(v);
  if (n == 0) return;
  for (float& x : v) x = static_cast<float>(x / n);
}

// Anything that maps text/images to unit vectors.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbedResponse embed(const EmbedRequest& request) const = 0;
  virtual std::size_t dim() const = 0;
  // Longest text (bytes) the provider's encoder accepts.
  virtual std::size_t text_limit() const { return 512; }
  virtual std::size_t max_batch() const { return 256; }
  virtual std::string name() const = 0;
};

// Deterministic stub: a seeded hash of (kind, item) expanded into a Gaussian
// vector and normalized. Unrelated items are nearly orthogonal.
class HashProvider : public EmbeddingProvider {
 public:
  explicit HashProvider(std::size_t dim = 64, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
    if (dim == 0) throw ContractError("embedding dimension must be positive");
  }

  std::vector<float> vector_for(EmbedKind kind, std::string_view item) const {
    std::uint64_t h = fnv1a64(item, fnv1a64(embed_kind_name(kind)));
    Rng rng(splitmix64(h ^ splitmix64(seed_)));
    std::vector<float> v(dim_);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    normalize_in_place(v);
    return v;
  }

  EmbedResponse embed(const EmbedRequest& request) const override {
    EmbedResponse r{dim_, {}};
    r.vectors.reserve(request.items.size());
    for (const auto& item : request.items) r.vectors.push_back(vector_for(request.kind, item));
    return r;
  }

  std::size_t dim() const override { return dim_; }
  std::string name() const override { return "random"; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Stub that understands synthetic scene references of the form
// "scene:<key>|<surface>|<surface>...": the image vector is the normalized
// sum of the depicted surfaces' text vectors plus seeded noise. Other items
// fall back to HashProvider behaviour.
class SceneProvider : public EmbeddingProvider {
 public:
  explicit SceneProvider(std::size_t dim = 64, std::uint64_t seed = 0, double noise = 0.5)
      : hash_(dim, seed), noise_(noise) {}

  EmbedResponse embed(const EmbedRequest& request) const override {
    EmbedResponse r{hash_.dim(), {}};
    for (const auto& item : request.items) {
      if (request.kind == EmbedKind::kImage && item.starts_with("scene:")) {
        r.vectors.push_back(scene_vector(item));
      } else {
        r.vectors.push_back(hash_.vector_for(request.kind, item));
      }
    }
    return r;
  }

  std::size_t dim() const override { return hash_.dim(); }
  std::string name() const override { return "stub"; }

 private:
  std::vector<float> scene_vector(const std::string& ref) const {
    auto parts = split(std::string_view(ref).substr(6), '|');
    std::vector<double> acc(hash_.dim(), 0.0);
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const auto t = hash_.vector_for(EmbedKind::kText, parts[i]);
      for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += t[d];
    }
    const auto n = hash_.vector_for(EmbedKind::kImage, ref);
    std::vector<float> v(acc.size());
    for (std::size_t d = 0; d < acc.size(); ++d) v[d] = static_cast<float>(acc[d] + noise_ * n[d]);
    normalize_in_place(v);
    return v;
  }

  HashProvider hash_;
  double noise_;
};

// Stub whose vectors depend only on a caller-supplied key per item; items
// sharing a key (for instance an article and its image) embed identically.
class KeyedProvider : public EmbeddingProvider {
 public:
  using KeyFn = std::function<std::string(EmbedKind, const std::string&)>;

  KeyedProvider(KeyFn key, std::size_t dim = 64, std::uint64_t seed = 0)
      : key_(std::move(key)), hash_(dim, seed) {}

  EmbedResponse embed(const EmbedRequest& request) const override {
    EmbedResponse r{hash_.dim(), {}};
    for (const auto& item : request.items) {
      r.vectors.push_back(hash_.vector_for(EmbedKind::kText, key_(request.kind, item)));
    }
    return r;
  }

  std::size_t dim() const override { return hash_.dim(); }
  std::string name() const override { return "keyed"; }

 private:
  KeyFn key_;
  HashProvider hash_;
};

}  // namespace entlm
