#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "entlm/error.hpp"
#include "entlm/lm/config.hpp"
#include "entlm/tokenizer.hpp"
#include "entlm/util.hpp"

namespace entlm::lm {

// Several documents laid end to end. Attention never crosses a segment and
// positions restart at zero in each one, so packing does not change what a
// document sees.
struct Batch {
  struct Segment {
    std::size_t offset;
    std::size_t length;
  };
  std::vector<TokenId> tokens;
  std::vector<std::int32_t> positions;
  std::vector<Segment> segments;
  // Per token: the id it must predict next, or -1 when not scored.
  std::vector<TokenId> targets;

  std::size_t size() const { return tokens.size(); }
  std::size_t num_targets() const {
    return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(),
                                                  [](TokenId t) { return t >= 0; }));
  }

  // Appends one document. `scored[j]` says whether token j counts as a
  // target (j >= 1); null scores every next-token prediction.
  void add(const std::vector<TokenId>& ids, const std::vector<std::uint8_t>* scored = nullptr) {
    if (ids.empty()) return;
    segments.push_back({tokens.size(), ids.size()});
    for (std::size_t j = 0; j < ids.size(); ++j) {
      tokens.push_back(ids[j]);
      positions.push_back(static_cast<std::int32_t>(j));
      const bool has_next = j + 1 < ids.size();
      const bool counted = has_next && (scored == nullptr || (*scored)[j + 1] != 0);
      targets.push_back(counted ? ids[j + 1] : -1);
    }
  }
};

// Offsets of every tensor inside the flat parameter vector.
struct TensorInfo {
  std::string name;
  std::size_t offset;
  std::size_t rows;
  std::size_t cols;
  bool decay;  // weight decay applies to matrices only

  std::size_t size() const { return rows * cols; }
};

struct LayerOffsets {
  std::size_t ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
  std::size_t ln2_g, ln2_b, fc_w, fc_b, out_w, out_b;
};

struct Layout {
  std::size_t wte = 0, wpe = 0, lnf_g = 0, lnf_b = 0, total = 0;
  std::vector<LayerOffsets> layers;
  std::vector<TensorInfo> tensors;

  explicit Layout(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    auto add = [&](const std::string& name, std::size_t rows, std::size_t cols, bool decay) {
      tensors.push_back({name, total, rows, cols, decay});
      total += rows * cols;
      return tensors.back().offset;
    };
    wte = add("wte", c.vocab_size, d, true);
    wpe = add("wpe", c.context_length, d, true);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      const std::string p = "h" + std::to_string(l) + ".";
      LayerOffsets o{};
      o.ln1_g = add(p + "ln1.g", 1, d, false);
      o.ln1_b = add(p + "ln1.b", 1, d, false);
      o.qkv_w = add(p + "attn.qkv.w", d, 3 * d, true);
      o.qkv_b = add(p + "attn.qkv.b", 1, 3 * d, false);
      o.proj_w = add(p + "attn.proj.w", d, d, true);
      o.proj_b = add(p + "attn.proj.b", 1, d, false);
      o.ln2_g = add(p + "ln2.g", 1, d, false);
      o.ln2_b = add(p + "ln2.b", 1, d, false);
      o.fc_w = add(p + "mlp.fc.w", d, 4 * d, true);
      o.fc_b = add(p + "mlp.fc.b", 1, 4 * d, false);
      o.out_w = add(p + "mlp.proj.w", 4 * d, d, true);
      o.out_b = add(p + "mlp.proj.b", 1, d, false);
      layers.push_back(o);
    }
    lnf_g = add("lnf.g", 1, d, false);
    lnf_b = add("lnf.b", 1, d, false);
  }
};

// Storage whose base address satisfies Eigen's packet alignment, so
// vectorized reductions over tensors peel identically on every run.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

// Pre-norm GPT-2 style decoder: learned absolute positions, GELU MLP of
// width 4*d_model, output head tied to the token embedding. Forward and
// backward are written out by hand. `Scalar` is float for training and
// double for gradient checks.
template <typename Scalar>
class Transformer {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using MapMat = Eigen::Map<Mat>;
  using CMapMat = Eigen::Map<const Mat>;
  using MapRow = Eigen::Map<RowVec>;
  using CMapRow = Eigen::Map<const RowVec>;

  explicit Transformer(const ModelConfig& config)
      : config_((config.validate(), config)), layout_(config_),
        params_(layout_.total, Scalar(0)), grads_(layout_.total, Scalar(0)) {
    initialize(config_.seed);
  }

  // GPT-2 initialization: N(0, 0.02), residual projections scaled by
  // 1/sqrt(2 * n_layers), unit LayerNorm gains, zero biases.
  void initialize(std::uint64_t seed) {
    Rng rng(splitmix64(seed ^ 0x1a2b3c4d5e6f7788ULL));
    const double resid_std = 0.02 / std::sqrt(2.0 * static_cast<double>(config_.n_layers));
    for (const auto& t : layout_.tensors) {
      Scalar* p = params_.data() + t.offset;
      const bool is_gain = t.name.ends_with(".g");
      const bool is_bias = t.name.ends_with(".b");
      const bool residual = t.name.ends_with("attn.proj.w") || t.name.ends_with("mlp.proj.w");
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (is_gain) p[i] = Scalar(1);
        else if (is_bias) p[i] = Scalar(0);
        else p[i] = static_cast<Scalar>(rng.normal() * (residual ? resid_std : 0.02));
      }
    }
  }

  const ModelConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }
  AlignedVector<Scalar>& params() { return params_; }
  const AlignedVector<Scalar>& params() const { return params_; }
  AlignedVector<Scalar>& grads() { return grads_; }
  const AlignedVector<Scalar>& grads() const { return grads_; }

  // Token embedding, which is also the output head.
  MapMat token_embedding() { return mat(layout_.wte, config_.vocab_size, config_.d_model); }

  template <typename Other>
  Transformer<Other> cast() const {
    Transformer<Other> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = static_cast<Other>(params_[i]);
    return out;
  }

  // Dropout on; masks drawn from `dropout_seed`.
  void set_training(bool on, std::uint64_t dropout_seed = 0) {
    training_ = on;
    dropout_rng_ = Rng(dropout_seed);
  }

  // Sign-flips one gradient term. Test fixture for the gradient checker's
  // negative control; never set in real use.
  bool corrupt_backward_for_testing = false;

  // Mean negative log-likelihood over the batch targets; fills grads().
  double forward_backward(const Batch& batch) {
    std::fill(grads_.begin(), grads_.end(), Scalar(0));
    forward(batch, true);
    const double loss = head_loss(batch, true);
    backward(batch);
    return loss;
  }

  double loss(const Batch& batch) {
    forward(batch, false);
    return head_loss(batch, false);
  }

  // log p(target) for every scored position, in batch order.
  std::vector<double> target_log_probs(const Batch& batch) {
    forward(batch, false);
    std::vector<double> out;
    out.reserve(batch.num_targets());
    for_each_target_chunk(batch, [&](const std::vector<std::size_t>& rows, const Mat& logits) {
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const double lse = log_sum_exp(logits, r);
        out.push_back(static_cast<double>(logits(static_cast<Eigen::Index>(r),
                                                 batch.targets[rows[r]])) - lse);
      }
    });
    return out;
  }

  // Full next-token log distribution at every position of one sequence.
  Eigen::MatrixXd log_probs(const std::vector<TokenId>& ids) {
    check_length(ids.size());
    Batch b;
    b.add(ids);
    forward(b, false);
    const std::size_t n = ids.size();
    Mat logits = lnf_out_ * token_embedding().transpose();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config_.vocab_size));
    for (std::size_t i = 0; i < n; ++i) {
      const double lse = log_sum_exp(logits, i);
      for (std::size_t v = 0; v < config_.vocab_size; ++v) {
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) =
            static_cast<double>(logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v))) - lse;
      }
    }
    return out;
  }

  // Logits for the token following `ids`.
  std::vector<double> next_logits(const std::vector<TokenId>& ids) {
    check_length(ids.size());
    Batch b;
    b.add(ids);
    forward(b, false);
    const auto last = static_cast<Eigen::Index>(ids.size() - 1);
    RowVec row = lnf_out_.row(last) * token_embedding().transpose();
    std::vector<double> out(config_.vocab_size);
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = static_cast<double>(row(static_cast<Eigen::Index>(v)));
    return out;
  }

  void check_length(std::size_t n) const {
    if (n == 0) throw ContractError("empty input sequence");
    if (n > config_.context_length) {
      throw ContractError("sequence of " + std::to_string(n) + " tokens exceeds context length " +
                          std::to_string(config_.context_length));
    }
  }

 private:
  static constexpr Scalar kLnEps = Scalar(1e-5);

  MapMat mat(std::size_t off, std::size_t r, std::size_t c) {
    return MapMat(params_.data() + off, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  MapMat gmat(std::size_t off, std::size_t r, std::size_t c) {
    return MapMat(grads_.data() + off, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  MapRow row(std::size_t off, std::size_t c) {
    return MapRow(params_.data() + off, static_cast<Eigen::Index>(c));
  }
  MapRow grow(std::size_t off, std::size_t c) {
    return MapRow(grads_.data() + off, static_cast<Eigen::Index>(c));
  }

  struct LayerCache {
    Mat x_in, ln1, qkv, att_out, x_mid, ln2, fc, fc_tanh, act;
    Vec mean1, rstd1, mean2, rstd2;
    Mat drop_attn, drop_mlp;
    std::vector<Mat> probs;  // per (segment, head)
  };

  static void layer_norm(const Mat& x, const RowVec& g, const RowVec& b, Mat& y, Vec& mean,
                         Vec& rstd) {
    const auto n = x.rows();
    const auto d = x.cols();
    y.resize(n, d);
    mean.resize(n);
    rstd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar m = x.row(i).mean();
      const Scalar var = (x.row(i).array() - m).square().mean();
      const Scalar rs = Scalar(1) / std::sqrt(var + kLnEps);
      mean(i) = m;
      rstd(i) = rs;
      y.row(i) = ((x.row(i).array() - m) * rs * g.array() + b.array()).matrix();
    }
  }

  // dx from dy; accumulates gain/bias gradients.
  static Mat layer_norm_backward(const Mat& x, const Mat& dy, const Vec& mean, const Vec& rstd,
                                 const RowVec& g, MapRow dg, MapRow db) {
    const auto n = x.rows();
    const auto d = x.cols();
    Mat dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const RowVec xhat = ((x.row(i).array() - mean(i)) * rstd(i)).matrix();
      dg += (dy.row(i).array() * xhat.array()).matrix();
      db += dy.row(i);
      const RowVec dxhat = (dy.row(i).array() * g.array()).matrix();
      const Scalar m1 = dxhat.mean();
      const Scalar m2 = (dxhat.array() * xhat.array()).mean();
      dx.row(i) = ((dxhat.array() - m1 - xhat.array() * m2) * rstd(i)).matrix();
    }
    return dx;
  }

  // tanh-approximated GELU; `th` receives the tanh term for the backward pass.
  static void gelu(const Mat& x, Mat& th, Mat& y) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    const auto xa = x.array();
    th = (Scalar(k) * (xa + Scalar(0.044715) * xa.cube())).tanh().matrix();
    y = (Scalar(0.5) * xa * (Scalar(1) + th.array())).matrix();
  }

  static void gelu_backward(const Mat& x, const Mat& th, Mat& dy) {
    constexpr double k = 0.7978845608028654;
    const auto xa = x.array();
    const auto t = th.array();
    const auto du = Scalar(k) * (Scalar(1) + Scalar(3 * 0.044715) * xa.square());
    dy.array() *= Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * xa * (Scalar(1) - t.square()) * du;
  }

  void dropout_mask(Mat& mask, Eigen::Index rows, Eigen::Index cols) {
    const double p = config_.dropout;
    mask.resize(rows, cols);
    const Scalar keep = Scalar(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask.data()[i] = dropout_rng_.uniform() < p ? Scalar(0) : keep;
    }
  }

  bool dropout_active() const { return training_ && config_.dropout > 0.0; }

  void forward(const Batch& batch, bool keep_cache) {
    const std::size_t n = batch.size();
    if (n == 0) throw ContractError("empty batch");
    for (const auto& s : batch.segments) check_length(s.length);
    const std::size_t d = config_.d_model;
    const auto N = static_cast<Eigen::Index>(n);
    const auto D = static_cast<Eigen::Index>(d);
    (void)keep_cache;

    Mat x(N, D);
    auto wte = mat(layout_.wte, config_.vocab_size, d);
    auto wpe = mat(layout_.wpe, config_.context_length, d);
    for (std::size_t i = 0; i < n; ++i) {
      const TokenId t = batch.tokens[i];
      if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
        throw ContractError("token id " + std::to_string(t) + " outside model vocabulary");
      }
      x.row(static_cast<Eigen::Index>(i)) = wte.row(t) + wpe.row(batch.positions[i]);
    }
    if (dropout_active()) {
      dropout_mask(drop_emb_, N, D);
      x.array() *= drop_emb_.array();
    }

    cache_.resize(config_.n_layers);
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
      const auto& o = layout_.layers[l];
      auto& c = cache_[l];
      c.x_in = x;
      layer_norm(x, row(o.ln1_g, d), row(o.ln1_b, d), c.ln1, c.mean1, c.rstd1);
      c.qkv.noalias() = c.ln1 * mat(o.qkv_w, d, 3 * d);
      c.qkv.rowwise() += row(o.qkv_b, 3 * d);
      attention_forward(batch, c);
      Mat proj = c.att_out * mat(o.proj_w, d, d);
      proj.rowwise() += row(o.proj_b, d);
      if (dropout_active()) {
        dropout_mask(c.drop_attn, N, D);
        proj.array() *= c.drop_attn.array();
      }
      c.x_mid = x + proj;
      layer_norm(c.x_mid, row(o.ln2_g, d), row(o.ln2_b, d), c.ln2, c.mean2, c.rstd2);
      c.fc.noalias() = c.ln2 * mat(o.fc_w, d, 4 * d);
      c.fc.rowwise() += row(o.fc_b, 4 * d);
      gelu(c.fc, c.fc_tanh, c.act);
      Mat mlp = c.act * mat(o.out_w, 4 * d, d);
      mlp.rowwise() += row(o.out_b, d);
      if (dropout_active()) {
        dropout_mask(c.drop_mlp, N, D);
        mlp.array() *= c.drop_mlp.array();
      }
      x = c.x_mid + mlp;
    }
    x_final_ = std::move(x);
    layer_norm(x_final_, row(layout_.lnf_g, d), row(layout_.lnf_b, d), lnf_out_, meanf_, rstdf_);
  }

  void attention_forward(const Batch& batch, LayerCache& c) {
    const std::size_t d = config_.d_model;
    const std::size_t hd = config_.head_dim();
    const std::size_t H = config_.n_heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    c.att_out.resize(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(d));
    c.probs.assign(batch.segments.size() * H, Mat());
    for (std::size_t s = 0; s < batch.segments.size(); ++s) {
      const auto r0 = static_cast<Eigen::Index>(batch.segments[s].offset);
      const auto L = static_cast<Eigen::Index>(batch.segments[s].length);
      for (std::size_t h = 0; h < H; ++h) {
        const auto q0 = static_cast<Eigen::Index>(h * hd);
        const auto k0 = static_cast<Eigen::Index>(d + h * hd);
        const auto v0 = static_cast<Eigen::Index>(2 * d + h * hd);
        const auto HD = static_cast<Eigen::Index>(hd);
        Mat& P = c.probs[s * H + h];
        P.noalias() = (c.qkv.block(r0, q0, L, HD) * c.qkv.block(r0, k0, L, HD).transpose()) * scale;
        for (Eigen::Index i = 0; i + 1 < L; ++i) {
          P.row(i).tail(L - i - 1).setConstant(-std::numeric_limits<Scalar>::infinity());
        }
        const Vec mx = P.rowwise().maxCoeff();
        P = (P.colwise() - mx).array().exp().matrix();
        const Vec inv = P.rowwise().sum().cwiseInverse();
        P = inv.asDiagonal() * P;
        c.att_out.block(r0, q0, L, HD).noalias() = P * c.qkv.block(r0, v0, L, HD);
      }
    }
  }

  static double log_sum_exp(const Mat& logits, std::size_t r) {
    const auto row = logits.row(static_cast<Eigen::Index>(r));
    const double mx = static_cast<double>(row.maxCoeff());
    double sum = 0;
    for (Eigen::Index v = 0; v < row.size(); ++v) sum += std::exp(static_cast<double>(row(v)) - mx);
    return mx + std::log(sum);
  }

  // Runs the head over target rows in chunks to bound memory.
  template <typename Fn>
  void for_each_target_chunk(const Batch& batch, Fn&& fn) {
    constexpr std::size_t kChunk = 512;
    std::vector<std::size_t> rows;
    auto flush = [&] {
      if (rows.empty()) return;
      Mat h(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(config_.d_model));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        h.row(static_cast<Eigen::Index>(r)) = lnf_out_.row(static_cast<Eigen::Index>(rows[r]));
      }
      Mat logits = h * token_embedding().transpose();
      fn(rows, logits);
      rows.clear();
    };
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch.targets[i] < 0) continue;
      rows.push_back(i);
      if (rows.size() == kChunk) flush();
    }
    flush();
  }

  // Cross-entropy over target rows; with `grad`, leaves d(loss)/d(lnf_out)
  // in dlnf_ and accumulates the head's share of the embedding gradient.
  double head_loss(const Batch& batch, bool grad) {
    const std::size_t count = batch.num_targets();
    if (count == 0) throw ContractError("batch has no scored targets");
    const double inv_count = 1.0 / static_cast<double>(count);
    double total = 0;
    if (grad) dlnf_ = Mat::Zero(lnf_out_.rows(), lnf_out_.cols());
    for_each_target_chunk(batch, [&](const std::vector<std::size_t>& rows, Mat& logits) {
      const auto R = static_cast<Eigen::Index>(rows.size());
      Vec target_logit(R);
      for (Eigen::Index r = 0; r < R; ++r) target_logit(r) = logits(r, batch.targets[rows[static_cast<std::size_t>(r)]]);
      const Vec mx = logits.rowwise().maxCoeff();
      logits.colwise() -= mx;
      logits = logits.array().exp().matrix();
      const Vec sum = logits.rowwise().sum();
      for (Eigen::Index r = 0; r < R; ++r) {
        const double lse = static_cast<double>(mx(r)) + std::log(static_cast<double>(sum(r)));
        total += lse - static_cast<double>(target_logit(r));
      }
      if (grad) {
        const Vec scale = (sum.array().inverse() * static_cast<Scalar>(inv_count)).matrix();
        logits = scale.asDiagonal() * logits;
        for (Eigen::Index r = 0; r < R; ++r) {
          logits(r, batch.targets[rows[static_cast<std::size_t>(r)]]) -= static_cast<Scalar>(inv_count);
        }
      }
      if (!grad) return;
      Mat h(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(config_.d_model));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        h.row(static_cast<Eigen::Index>(r)) = lnf_out_.row(static_cast<Eigen::Index>(rows[r]));
      }
      gmat(layout_.wte, config_.vocab_size, config_.d_model).noalias() += logits.transpose() * h;
      Mat dh = logits * token_embedding();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        dlnf_.row(static_cast<Eigen::Index>(rows[r])) = dh.row(static_cast<Eigen::Index>(r));
      }
    });
    return total * inv_count;
  }

  void backward(const Batch& batch) {
    const std::size_t d = config_.d_model;
    Mat dx = layer_norm_backward(x_final_, dlnf_, meanf_, rstdf_, row(layout_.lnf_g, d),
                                 grow(layout_.lnf_g, d), grow(layout_.lnf_b, d));
    if (corrupt_backward_for_testing) grow(layout_.lnf_b, d) *= Scalar(-1);

    for (std::size_t li = config_.n_layers; li-- > 0;) {
      const auto& o = layout_.layers[li];
      auto& c = cache_[li];
      // MLP branch.
      Mat dmlp = dx;
      if (dropout_active()) dmlp.array() *= c.drop_mlp.array();
      gmat(o.out_w, 4 * d, d).noalias() += c.act.transpose() * dmlp;
      grow(o.out_b, d) += dmlp.colwise().sum();
      Mat dfc = dmlp * mat(o.out_w, 4 * d, d).transpose();
      gelu_backward(c.fc, c.fc_tanh, dfc);
      gmat(o.fc_w, d, 4 * d).noalias() += c.ln2.transpose() * dfc;
      grow(o.fc_b, 4 * d) += dfc.colwise().sum();
      Mat dln2 = dfc * mat(o.fc_w, d, 4 * d).transpose();
      Mat dx_mid = dx + layer_norm_backward(c.x_mid, dln2, c.mean2, c.rstd2, row(o.ln2_g, d),
                                            grow(o.ln2_g, d), grow(o.ln2_b, d));
      // Attention branch.
      Mat dproj = dx_mid;
      if (dropout_active()) dproj.array() *= c.drop_attn.array();
      gmat(o.proj_w, d, d).noalias() += c.att_out.transpose() * dproj;
      grow(o.proj_b, d) += dproj.colwise().sum();
      Mat datt = dproj * mat(o.proj_w, d, d).transpose();
      Mat dqkv = attention_backward(batch, c, datt);
      gmat(o.qkv_w, d, 3 * d).noalias() += c.ln1.transpose() * dqkv;
      grow(o.qkv_b, 3 * d) += dqkv.colwise().sum();
      Mat dln1 = dqkv * mat(o.qkv_w, d, 3 * d).transpose();
      dx = dx_mid + layer_norm_backward(c.x_in, dln1, c.mean1, c.rstd1, row(o.ln1_g, d),
                                        grow(o.ln1_g, d), grow(o.ln1_b, d));
    }
    if (dropout_active()) dx.array() *= drop_emb_.array();
    auto gwte = gmat(layout_.wte, config_.vocab_size, d);
    auto gwpe = gmat(layout_.wpe, config_.context_length, d);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      gwte.row(batch.tokens[i]) += dx.row(static_cast<Eigen::Index>(i));
      gwpe.row(batch.positions[i]) += dx.row(static_cast<Eigen::Index>(i));
    }
  }

  Mat attention_backward(const Batch& batch, const LayerCache& c, const Mat& datt) {
    const std::size_t d = config_.d_model;
    const std::size_t hd = config_.head_dim();
    const std::size_t H = config_.n_heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
    Mat dqkv = Mat::Zero(c.qkv.rows(), c.qkv.cols());
    for (std::size_t s = 0; s < batch.segments.size(); ++s) {
      const auto r0 = static_cast<Eigen::Index>(batch.segments[s].offset);
      const auto L = static_cast<Eigen::Index>(batch.segments[s].length);
      for (std::size_t h = 0; h < H; ++h) {
        const auto q0 = static_cast<Eigen::Index>(h * hd);
        const auto k0 = static_cast<Eigen::Index>(d + h * hd);
        const auto v0 = static_cast<Eigen::Index>(2 * d + h * hd);
        const auto HD = static_cast<Eigen::Index>(hd);
        const Mat& P = c.probs[s * H + h];
        const auto dout = datt.block(r0, q0, L, HD);
        Mat dP = dout * c.qkv.block(r0, v0, L, HD).transpose();
        dqkv.block(r0, v0, L, HD).noalias() = P.transpose() * dout;
        // Softmax backward; masked entries have P = 0 and stay zero.
        const Vec dot = (P.array() * dP.array()).rowwise().sum().matrix();
        dP = ((dP.colwise() - dot).array() * P.array() * scale).matrix();
        dqkv.block(r0, q0, L, HD).noalias() = dP * c.qkv.block(r0, k0, L, HD);
        dqkv.block(r0, k0, L, HD).noalias() = dP.transpose() * c.qkv.block(r0, q0, L, HD);
      }
    }
    return dqkv;
  }

  ModelConfig config_;
  Layout layout_;
  AlignedVector<Scalar> params_;
  AlignedVector<Scalar> grads_;
  bool training_ = false;
  Rng dropout_rng_{0};

  std::vector<LayerCache> cache_;
  Mat drop_emb_;
  Mat x_final_, lnf_out_, dlnf_;
  Vec meanf_, rstdf_;
};

}  // namespace entlm::lm
