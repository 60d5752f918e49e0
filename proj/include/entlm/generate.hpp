#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/error.hpp"
#include "entlm/lm/transformer.hpp"
#include "entlm/serializer.hpp"
#include "entlm/tokenizer.hpp"
#include "entlm/util.hpp"

namespace entlm {

struct SamplerConfig {
  double p = 0.95;
  double temperature = 1.0;
  std::size_t max_new_tokens = 256;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(p > 0.0 && p <= 1.0)) throw ContractError("top-p must be in (0, 1]");
    if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
  }
};

// Cumulative-mass comparisons allow this much rounding slack.
inline constexpr double kTopPSlack = 1e-12;

// Smallest prefix of the probability-sorted tokens (ties by lower id) whose
// mass reaches p, renormalized; everything else gets exactly zero.
inline std::vector<double> top_p_filter(const std::vector<double>& probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ContractError("top-p must be in (0, 1]");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<double> out(probs.size(), 0.0);
  double mass = 0;
  std::size_t kept = 0;
  for (std::size_t idx : order) {
    mass += probs[idx];
    ++kept;
    if (mass >= p - kTopPSlack) break;
  }
  double total = 0;
  for (std::size_t r = 0; r < kept; ++r) total += probs[order[r]];
  if (!(total > 0)) throw ContractError("top-p: distribution has no mass");
  for (std::size_t r = 0; r < kept; ++r) out[order[r]] = probs[order[r]] / total;
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& logits, double temperature = 1.0) {
  if (logits.empty()) throw ContractError("softmax of empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / temperature);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Inverse-CDF draw; zero-probability entries are never returned.
inline std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  std::size_t last = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  if (last == probs.size()) throw ContractError("sample_index: no positive probability");
  return last;
}

enum class StopReason { kEndBody, kMalformed, kMaxTokens, kContextFull };

inline std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::kEndBody: return "end-body";
    case StopReason::kMalformed: return "malformed";
    case StopReason::kMaxTokens: return "max-tokens";
    case StopReason::kContextFull: return "context-full";
  }
  return "unknown";
}

struct Generation {
  std::string text;      // body as generated, category tokens included
  std::string stripped;  // category tokens removed
  std::vector<TokenId> tokens;  // generated ids, including a final boundary token
  StopReason stop = StopReason::kMaxTokens;
  bool malformed() const { return stop == StopReason::kMalformed; }
};

// Samples the body that follows `context`, which must end with the body
// start token.
inline Generation generate_field(lm::Transformer<float>& model, const Vocab& vocab,
                                 std::string_view context, const SamplerConfig& cfg) {
  cfg.validate();
  const std::string start = field_start_literal(FieldTag::kBody);
  if (context.size() < start.size() || context.substr(context.size() - start.size()) != start) {
    throw ContractError("generation context must end with " + start);
  }
  std::vector<TokenId> ids = vocab.encode(context).ids;
  const std::size_t window = model.config().context_length;
  if (ids.size() >= window) {
    throw ContractError("context of " + std::to_string(ids.size()) + " tokens leaves no room in a " +
                        std::to_string(window) + "-token window");
  }
  if (vocab.size() != model.config().vocab_size) {
    throw VocabMismatchError("tokenizer and model disagree on vocabulary size");
  }
  Rng rng(splitmix64(cfg.seed ^ 0x7a3b9e11ULL));
  Generation g;
  const TokenId end_body = Vocab::end_id(FieldTag::kBody);
  std::vector<TokenId> body;
  while (true) {
    if (g.tokens.size() >= cfg.max_new_tokens) {
      g.stop = StopReason::kMaxTokens;
      break;
    }
    if (ids.size() >= window) {
      g.stop = StopReason::kContextFull;
      break;
    }
    const auto probs = top_p_filter(softmax(model.next_logits(ids), cfg.temperature), cfg.p);
    const auto next = static_cast<TokenId>(sample_index(probs, rng));
    g.tokens.push_back(next);
    ids.push_back(next);
    if (next == end_body) {
      g.stop = StopReason::kEndBody;
      break;
    }
    if (Vocab::is_boundary(next)) {
      g.stop = StopReason::kMalformed;
      break;
    }
    body.push_back(next);
  }
  g.text = vocab.decode(body);
  if (!g.text.empty() && g.text.front() == ' ') g.text.erase(0, 1);
  if (g.stop == StopReason::kEndBody && !g.text.empty() && g.text.back() == ' ') g.text.pop_back();
  g.stripped = strip_annotations(g.text);
  return g;
}

}  // namespace entlm
