#pragma once

// Plain-loop double-precision forward pass over a flat parameter vector.
// Shares nothing with the library's forward pass except the tensor names.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "entlm/lm/transformer.hpp"

namespace reftest {

class ReferenceLM {
 public:
  template <typename Scalar>
  explicit ReferenceLM(const entlm::lm::Transformer<Scalar>& model) : c_(model.config()) {
    for (const auto& t : model.layout().tensors) {
      std::vector<double> v(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) v[i] = static_cast<double>(model.params()[t.offset + i]);
      w_[t.name] = std::move(v);
    }
  }

  // Row i: log p(. | ids[0..i]).
  std::vector<std::vector<double>> log_probs(const std::vector<int>& ids) const {
    const std::size_t n = ids.size(), d = c_.d_model, H = c_.n_heads, hd = d / H;
    const auto& wte = w_.at("wte");
    const auto& wpe = w_.at("wpe");
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[i][j] = wte[ids[i] * d + j] + wpe[i * d + j];
    }
    for (std::size_t l = 0; l < c_.n_layers; ++l) {
      const std::string p = "h" + std::to_string(l) + ".";
      auto h = norm(x, w_.at(p + "ln1.g"), w_.at(p + "ln1.b"));
      auto qkv = affine(h, w_.at(p + "attn.qkv.w"), w_.at(p + "attn.qkv.b"), d, 3 * d);
      std::vector<std::vector<double>> att(n, std::vector<double>(d, 0.0));
      for (std::size_t head = 0; head < H; ++head) {
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<double> s(i + 1);
          double mx = -INFINITY;
          for (std::size_t j = 0; j <= i; ++j) {
            double dot = 0;
            for (std::size_t e = 0; e < hd; ++e) dot += qkv[i][head * hd + e] * qkv[j][d + head * hd + e];
            s[j] = dot / std::sqrt(static_cast<double>(hd));
            mx = std::max(mx, s[j]);
          }
          double z = 0;
          for (auto& v : s) z += (v = std::exp(v - mx));
          for (std::size_t j = 0; j <= i; ++j) {
            for (std::size_t e = 0; e < hd; ++e) att[i][head * hd + e] += s[j] / z * qkv[j][2 * d + head * hd + e];
          }
        }
      }
      auto proj = affine(att, w_.at(p + "attn.proj.w"), w_.at(p + "attn.proj.b"), d, d);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x[i][j] += proj[i][j];
      auto h2 = norm(x, w_.at(p + "ln2.g"), w_.at(p + "ln2.b"));
      auto fc = affine(h2, w_.at(p + "mlp.fc.w"), w_.at(p + "mlp.fc.b"), d, 4 * d);
      for (auto& r : fc) {
        for (auto& v : r) v = 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v)));
      }
      auto out = affine(fc, w_.at(p + "mlp.proj.w"), w_.at(p + "mlp.proj.b"), 4 * d, d);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x[i][j] += out[i][j];
    }
    auto f = norm(x, w_.at("lnf.g"), w_.at("lnf.b"));
    std::vector<std::vector<double>> lp(n, std::vector<double>(c_.vocab_size));
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -INFINITY;
      for (std::size_t v = 0; v < c_.vocab_size; ++v) {
        double dot = 0;
        for (std::size_t j = 0; j < d; ++j) dot += f[i][j] * wte[v * d + j];
        lp[i][v] = dot;
        mx = std::max(mx, dot);
      }
      double z = 0;
      for (double v : lp[i]) z += std::exp(v - mx);
      const double lse = mx + std::log(z);
      for (double& v : lp[i]) v -= lse;
    }
    return lp;
  }

 private:
  static std::vector<std::vector<double>> norm(const std::vector<std::vector<double>>& x,
                                               const std::vector<double>& g, const std::vector<double>& b) {
    auto y = x;
    for (auto& r : y) {
      double m = 0, v = 0;
      for (double e : r) m += e;
      m /= static_cast<double>(r.size());
      for (double e : r) v += (e - m) * (e - m);
      v /= static_cast<double>(r.size());
      for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - m) / std::sqrt(v + 1e-5) * g[j] + b[j];
    }
    return y;
  }

  static std::vector<std::vector<double>> affine(const std::vector<std::vector<double>>& x,
                                                 const std::vector<double>& w, const std::vector<double>& b,
                                                 std::size_t in, std::size_t out) {
    std::vector<std::vector<double>> y(x.size(), std::vector<double>(out));
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        for (std::size_t k = 0; k < in; ++k) s += x[i][k] * w[k * out + o];
        y[i][o] = s;
      }
    }
    return y;
  }

  entlm::lm::ModelConfig c_;
  std::map<std::string, std::vector<double>> w_;
};

}  // namespace reftest
