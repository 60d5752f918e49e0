#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "entlm/error.hpp"

namespace entlm::lm {

// Longest sequence any preset may declare.
inline constexpr std::size_t kMaxContext = 1024;

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t context_length = 256;
  std::size_t vocab_size = 8192;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (n_layers == 0 || d_model == 0 || n_heads == 0 || context_length == 0 || vocab_size == 0) {
      throw ContractError("model config values must be positive");
    }
    if (d_model % n_heads != 0) throw ContractError("d_model must be divisible by n_heads");
    if (context_length > kMaxContext) {
      throw ContractError("context_length exceeds " + std::to_string(kMaxContext));
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ContractError("dropout must be in [0, 1)");
  }

  // Parameter count with the output head tied to the token embedding.
  std::size_t num_parameters() const {
    const std::size_t d = d_model;
    const std::size_t per_layer = 4 * d + (d * 3 * d + 3 * d) + (d * d + d) + (d * 4 * d + 4 * d) +
                                  (4 * d * d + d);
    return vocab_size * d + context_length * d + n_layers * per_layer + 2 * d;
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},   {"d_model", c.d_model},
          {"n_heads", c.n_heads},     {"context_length", c.context_length},
          {"vocab_size", c.vocab_size}, {"dropout", c.dropout},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.context_length = j.at("context_length").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.dropout = j.value("dropout", 0.0);
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

// Presets. "tiny" is for gradient checks, "nano" is the desk-scale default,
// the rest mirror GPT-2 family shapes and are not meant to be trained here.
inline ModelConfig model_preset(std::string_view name, std::size_t vocab_size = 0) {
  ModelConfig c;
  if (name == "tiny") {
    c = {2, 32, 2, 64, 512, 0.0, 0};
  } else if (name == "nano") {
    c = {4, 128, 4, 256, 8192, 0.0, 0};
  } else if (name == "base") {
    c = {12, 768, 12, 1024, 50257, 0.1, 0};
  } else if (name == "medium") {
    c = {24, 1024, 16, 1024, 50257, 0.1, 0};
  } else if (name == "xl") {
    c = {48, 1600, 25, 1024, 50257, 0.1, 0};
  } else {
    throw ContractError("unknown model preset '" + std::string(name) + "'");
  }
  if (vocab_size != 0) c.vocab_size = vocab_size;
  c.validate();
  return c;
}

struct TrainConfig {
  std::size_t batch_size = 8;  // documents per step
  double max_lr = 1e-4;
  double min_lr_fraction = 0.1;
  double warmup_fraction = 0.06;
  std::size_t total_steps = 1000;
  double clip_norm = 1.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;
  std::string checkpoint_prefix;
  double divergence_factor = 3.0;
  std::size_t divergence_patience = 100;

  void validate() const {
    if (batch_size == 0 || total_steps == 0) throw ContractError("batch size and steps must be positive");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
      throw ContractError("warmup fraction must be in [0, 1)");
    }
    if (max_lr <= 0) throw ContractError("learning rate must be positive");
  }
};

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size},       {"max_lr", t.max_lr},
          {"min_lr_fraction", t.min_lr_fraction}, {"warmup_fraction", t.warmup_fraction},
          {"total_steps", t.total_steps},     {"clip_norm", t.clip_norm},
          {"weight_decay", t.weight_decay},   {"beta1", t.beta1},
          {"beta2", t.beta2},                 {"seed", t.seed}};
}

}  // namespace entlm::lm
