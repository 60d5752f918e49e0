#pragma once

// HTTP transport for the embedding provider protocol: GET /health, POST /embed.

#include <memory>
#include <mutex>
#include <string>

#include <httplib.h>
// <resolv.h> (pulled in by httplib) defines _res, an identifier Eigen uses.
#undef _res
#include <json.hpp>

#include "entlm/embedding.hpp"

namespace entlm {

class HttpProvider : public EmbeddingProvider {
 public:
  // `base_url` like "http://127.0.0.1:8765". Performs the /health handshake
  // immediately; `expected_dim` of 0 accepts whatever the service declares.
  explicit HttpProvider(std::string base_url, std::size_t expected_dim = 0,
                        std::size_t text_limit = 512, int timeout_seconds = 30)
      : base_url_(std::move(base_url)), text_limit_(text_limit),
        client_(std::make_unique<httplib::Client>(base_url_)) {
    client_->set_connection_timeout(timeout_seconds, 0);
    client_->set_read_timeout(timeout_seconds, 0);
    auto res = client_->Get("/health");
    if (!res) {
      throw TransportError("embedding service at " + base_url_ + " unreachable: " +
                           httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw TransportError("embedding service /health returned " + std::to_string(res->status));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      dim_ = j.at("dim").get<std::size_t>();
      if (j.contains("model")) model_ = j["model"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed /health response: ") + e.what());
    }
    if (expected_dim != 0 && expected_dim != dim_) {
      throw ContractError("embedding service declares dim " + std::to_string(dim_) +
                          ", expected " + std::to_string(expected_dim));
    }
  }

  EmbedResponse embed(const EmbedRequest& request) const override {
    const std::string body = request_to_json(request).dump();
    httplib::Result res;
    {
      // httplib::Client is not safe for concurrent requests.
      std::lock_guard<std::mutex> lock(mu_);
      res = client_->Post("/embed", body, "application/json");
    }
    if (!res) {
      throw TransportError("POST /embed failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw TransportError("POST /embed returned " + std::to_string(res->status) + ": " +
                           res->body);
    }
    EmbedResponse r;
    try {
      r = response_from_json(nlohmann::json::parse(res->body));
    } catch (const nlohmann::json::parse_error& e) {
      throw TransportError(std::string("malformed /embed body: ") + e.what());
    }
    if (r.dim != dim_) throw ContractError("embedding dimension drifted from /health handshake");
    if (r.vectors.size() != request.items.size()) {
      throw TransportError("embedding service returned a different number of vectors");
    }
    return r;
  }

  std::size_t dim() const override { return dim_; }
  std::size_t text_limit() const override { return text_limit_; }
  std::string name() const override { return "http:" + base_url_ + (model_.empty() ? "" : "/" + model_); }

 private:
  std::string base_url_;
  std::size_t text_limit_;
  std::size_t dim_ = 0;
  std::string model_;
  std::unique_ptr<httplib::Client> client_;
  mutable std::mutex mu_;
};

// Exposes `provider` over the same protocol. Used by tests and for serving
// the stub to out-of-process consumers.
inline void mount_embedding_routes(httplib::Server& server, const EmbeddingProvider& provider,
                                   std::size_t max_batch = 256) {
  server.Get("/health", [&provider](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"dim", provider.dim()}, {"model", provider.name()}}.dump(),
                     "application/json");
  });
  server.Post("/embed", [&provider, max_batch](const httplib::Request& req, httplib::Response& res) {
    EmbedRequest r;
    try {
      r = request_from_json(nlohmann::json::parse(req.body));
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
      return;
    }
    if (r.items.size() > max_batch) {
      res.status = 413;
      res.set_content("batch too large", "text/plain");
      return;
    }
    res.set_content(response_to_json(provider.embed(r)).dump(), "application/json");
  });
}

}  // namespace entlm
