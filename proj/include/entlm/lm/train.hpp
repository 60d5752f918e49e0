#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "entlm/error.hpp"
#include "entlm/lm/checkpoint.hpp"
#include "entlm/lm/config.hpp"
#include "entlm/lm/transformer.hpp"
#include "entlm/util.hpp"

namespace entlm::lm {

// Linear warmup to max_lr, then cosine decay to min_lr_fraction * max_lr at
// the final step.
inline double learning_rate(std::size_t step, const TrainConfig& c) {
  const auto total = static_cast<double>(c.total_steps);
  const double warmup = std::floor(c.warmup_fraction * total);
  const auto s = static_cast<double>(step);
  if (s < warmup) return c.max_lr * (s + 1.0) / warmup;
  const double span = std::max(1.0, total - warmup - 1.0);
  const double progress = std::min(1.0, (s - warmup) / span);
  const double min_lr = c.max_lr * c.min_lr_fraction;
  return min_lr + 0.5 * (c.max_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
// norm before clipping.
template <typename Scalar, typename Alloc>
double clip_grad_norm(std::vector<Scalar, Alloc>& grads, double max_norm) {
  double sq = 0;
  for (Scalar g : grads) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto scale = static_cast<Scalar>(max_norm / (norm + 1e-12));
    for (Scalar& g : grads) g *= scale;
  }
  return norm;
}

// Adam with decoupled weight decay, applied to matrices only.
class AdamW {
 public:
  AdamW(const Layout& layout, const TrainConfig& c) : config_(c), m_(layout.total, 0.f), v_(layout.total, 0.f) {
    decay_.assign(layout.total, 0);
    for (const auto& t : layout.tensors) {
      if (t.decay) std::fill(decay_.begin() + static_cast<std::ptrdiff_t>(t.offset),
                             decay_.begin() + static_cast<std::ptrdiff_t>(t.offset + t.size()), 1);
    }
  }

  void step(AlignedVector<float>& params, const AlignedVector<float>& grads, double lr) {
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const auto c1 = static_cast<float>(1.0 / (1.0 - std::pow(b1, static_cast<double>(t_))));
    const auto c2 = static_cast<float>(1.0 / (1.0 - std::pow(b2, static_cast<double>(t_))));
    const auto flr = static_cast<float>(lr);
    const auto wd = static_cast<float>(lr * config_.weight_decay);
    const auto fb1 = static_cast<float>(b1);
    const auto fb2 = static_cast<float>(b2);
    const auto eps = static_cast<float>(config_.adam_eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const float g = grads[i];
      m_[i] = fb1 * m_[i] + (1.f - fb1) * g;
      v_[i] = fb2 * v_[i] + (1.f - fb2) * g * g;
      const float mhat = m_[i] * c1;
      const float vhat = v_[i] * c2;
      if (decay_[i]) params[i] -= wd * params[i];
      params[i] -= flr * mhat / (std::sqrt(vhat) + eps);
    }
  }

  std::vector<float>& m() { return m_; }
  std::vector<float>& v() { return v_; }
  const std::vector<float>& m() const { return m_; }
  const std::vector<float>& v() const { return v_; }
  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  TrainConfig config_;
  std::vector<float> m_, v_;
  std::vector<std::uint8_t> decay_;
  std::uint64_t t_ = 0;
};

inline Checkpoint make_checkpoint(const Transformer<float>& model, std::uint64_t step,
                                  std::uint64_t vocab_hash, const AdamW* opt = nullptr) {
  Checkpoint c;
  c.config = model.config();
  c.params.assign(model.params().begin(), model.params().end());
  if (opt) {
    c.adam_m = opt->m();
    c.adam_v = opt->v();
  }
  c.step = step;
  c.vocab_hash = vocab_hash;
  return c;
}

inline Transformer<float> model_from_checkpoint(const Checkpoint& c) {
  Transformer<float> model(c.config);
  if (c.params.size() != model.params().size()) throw IntegrityError("checkpoint size mismatch");
  model.params().assign(c.params.begin(), c.params.end());
  return model;
}

// Keeps the first context_length tokens; overflow comes off the body tail.
inline std::vector<TokenId> fit_context(const std::vector<TokenId>& ids, std::size_t context_length) {
  if (ids.size() <= context_length) return ids;
  return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(context_length)};
}

struct TrainResult {
  std::vector<double> losses;  // one per step
  std::vector<double> grad_norms;
  std::uint64_t steps = 0;
};

struct TrainHooks {
  std::uint64_t vocab_hash = 0;
  // Called after every step with (step index, loss).
  std::function<void(std::size_t, double)> on_step;
};

// Deterministic epoch order: each epoch is a fresh seeded shuffle.
class DocumentStream {
 public:
  DocumentStream(std::size_t n, std::uint64_t seed) : order_(n), rng_(splitmix64(seed ^ 0xd0c5d0c5ULL)) {
    if (n == 0) throw ContractError("training corpus is empty");
    reshuffle();
  }

  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

inline TrainResult train(Transformer<float>& model, const std::vector<std::vector<TokenId>>& docs,
                         const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  std::vector<std::vector<TokenId>> fitted;
  fitted.reserve(docs.size());
  for (const auto& d : docs) {
    if (d.size() >= 2) fitted.push_back(fit_context(d, model.config().context_length));
  }
  if (fitted.empty()) throw ContractError("training corpus has no document with at least two tokens");

  AdamW opt(model.layout(), cfg);
  DocumentStream stream(fitted.size(), cfg.seed);
  model.set_training(true, splitmix64(cfg.seed ^ 0xd40b07ULL));
  TrainResult result;
  double initial = 0;
  std::size_t above = 0;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    Batch batch;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) batch.add(fitted[stream.next()]);
    const double loss = model.forward_backward(batch);
    if (!std::isfinite(loss)) {
      model.set_training(false);
      throw DivergenceError("loss became non-finite at step " + std::to_string(step));
    }
    result.grad_norms.push_back(clip_grad_norm(model.grads(), cfg.clip_norm));
    opt.step(model.params(), model.grads(), learning_rate(step, cfg));
    result.losses.push_back(loss);
    if (step == 0) initial = loss;
    above = loss > cfg.divergence_factor * initial ? above + 1 : 0;
    if (cfg.divergence_patience > 0 && above >= cfg.divergence_patience) {
      model.set_training(false);
      throw DivergenceError("loss above " + std::to_string(cfg.divergence_factor) + "x initial for " +
                            std::to_string(above) + " consecutive steps (step " + std::to_string(step) + ")");
    }
    if (hooks.on_step) hooks.on_step(step, loss);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() &&
        (step + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(make_checkpoint(model, step + 1, hooks.vocab_hash, &opt),
                      cfg.checkpoint_prefix + "-step" + std::to_string(step + 1) + ".ckpt");
    }
  }
  result.steps = cfg.total_steps;
  model.set_training(false);
  return result;
}

}  // namespace entlm::lm
