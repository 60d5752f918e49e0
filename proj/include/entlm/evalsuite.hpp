#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "entlm/error.hpp"
#include "entlm/lm/train.hpp"
#include "entlm/lm/transformer.hpp"
#include "entlm/pipeline.hpp"
#include "entlm/tokenizer.hpp"

namespace entlm {

// Target positions that count toward body perplexity: body tokens that are
// neither boundary tokens nor annotation (category tokens and the space the
// annotation put in front of them).
inline std::vector<std::uint8_t> body_eval_mask(const TokenSequence& seq) {
  std::vector<std::uint8_t> mask(seq.size(), 0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    mask[i] = seq.field_mask[i] == FieldTag::kBody && !Vocab::is_boundary(seq.ids[i]) &&
              !seq.annotation_mask[i];
  }
  return mask;
}

struct EvalDoc {
  std::string id;
  std::string text;  // serialized document
};

inline std::vector<EvalDoc> eval_docs(const std::vector<AnnotatedDocument>& docs) {
  std::vector<EvalDoc> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back({d.id, d.serialized});
  return out;
}

struct PPLReport {
  std::vector<std::string> ids;
  std::vector<double> doc_nll;  // summed over the doc's masked targets
  std::vector<std::size_t> doc_tokens;
  double total_nll = 0;
  std::size_t total_tokens = 0;
  std::string fingerprint;

  double doc_ppl(std::size_t i) const {
    return doc_tokens[i] ? std::exp(doc_nll[i] / static_cast<double>(doc_tokens[i])) : std::nan("");
  }
  // Token-weighted over the whole evaluation set.
  double ppl() const { return std::exp(total_nll / static_cast<double>(total_tokens)); }

  nlohmann::json to_json() const {
    nlohmann::json docs = nlohmann::json::array();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      docs.push_back({{"id", ids[i]}, {"tokens", doc_tokens[i]}, {"nll", doc_nll[i]},
                      {"ppl", doc_tokens[i] ? nlohmann::json(doc_ppl(i)) : nlohmann::json(nullptr)}});
    }
    return {{"ppl", ppl()},
            {"tokens", total_tokens},
            {"nll", total_nll},
            {"fingerprint", fingerprint},
            {"documents", docs}};
  }
};

// Body-restricted perplexity. Documents are truncated to the window and
// packed `batch_tokens` at a time; packing does not change the result.
inline PPLReport perplexity(lm::Transformer<float>& model, const Vocab& vocab,
                            const std::vector<EvalDoc>& docs,
                            std::optional<std::uint64_t> model_vocab_hash = std::nullopt,
                            std::size_t batch_tokens = 4096, std::string fingerprint = {}) {
  if (vocab.size() != model.config().vocab_size) {
    throw VocabMismatchError("tokenizer has " + std::to_string(vocab.size()) + " ids, model expects " +
                             std::to_string(model.config().vocab_size));
  }
  if (model_vocab_hash && *model_vocab_hash != vocab.hash()) {
    throw VocabMismatchError("model was trained with a different tokenizer");
  }
  PPLReport r;
  r.fingerprint = std::move(fingerprint);
  const std::size_t window = model.config().context_length;
  lm::Batch batch;
  std::vector<std::size_t> members;
  auto flush = [&] {
    if (batch.size() == 0) return;
    if (batch.num_targets() > 0) {
      const auto lp = model.target_log_probs(batch);
      std::size_t pos = 0;
      for (std::size_t m : members) {
        for (std::size_t t = 0; t < r.doc_tokens[m]; ++t) r.doc_nll[m] -= lp[pos++];
      }
    }
    batch = lm::Batch();
    members.clear();
  };
  for (const auto& d : docs) {
    const TokenSequence seq = vocab.encode(d.text);
    const auto ids = lm::fit_context(seq.ids, window);
    auto mask = body_eval_mask(seq);
    mask.resize(ids.size());
    const std::size_t count =
        ids.empty() ? 0 : static_cast<std::size_t>(std::count(mask.begin() + 1, mask.end(), 1));
    r.ids.push_back(d.id);
    r.doc_nll.push_back(0.0);
    r.doc_tokens.push_back(count);
    if (count == 0) continue;
    if (batch.size() + ids.size() > std::max(batch_tokens, window)) flush();
    batch.add(ids, &mask);
    members.push_back(r.ids.size() - 1);
  }
  flush();
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    r.total_nll += r.doc_nll[i];
    r.total_tokens += r.doc_tokens[i];
  }
  if (r.total_tokens == 0) throw ContractError("perplexity: evaluation mask selects no tokens");
  return r;
}

// Fraction of queries whose paired target (query i pairs with target i)
// ranks within the top k. Ties between equal scores go to the lower target
// index.
inline std::map<std::size_t, double> recall_at_k(const Eigen::MatrixXd& sim,
                                                 const std::vector<std::size_t>& ks) {
  const auto nq = static_cast<std::size_t>(sim.rows());
  const auto nt = static_cast<std::size_t>(sim.cols());
  if (nq == 0) throw ContractError("recall_at_k: no queries");
  if (nq > nt) throw ContractError("recall_at_k: more queries than targets");
  for (std::size_t k : ks) {
    if (k == 0 || k > nt) {
      throw ContractError("recall_at_k: k=" + std::to_string(k) + " outside [1, " + std::to_string(nt) + "]");
    }
  }
  std::vector<std::size_t> rank(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    const double s = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < nt; ++j) {
      const double v = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v > s || (v == s && j < i)) ++ahead;
    }
    rank[i] = ahead;
  }
  std::map<std::size_t, double> out;
  for (std::size_t k : ks) {
    const auto hits = std::count_if(rank.begin(), rank.end(), [&](std::size_t r) { return r < k; });
    out[k] = static_cast<double>(hits) / static_cast<double>(nq);
  }
  return out;
}

// One training-and-evaluation setup shared by every arm of an ablation.
struct AblationSetup {
  const std::vector<Article>* train = nullptr;
  const std::vector<Article>* eval = nullptr;
  const Vocab* vocab = nullptr;
  PipelineContext ctx;
  lm::ModelConfig model;
  lm::TrainConfig train_config;
  // Called after every training step with (arm name, step, loss).
  std::function<void(const std::string&, std::size_t, double)> progress;
};

struct ArmResult {
  DocConfig config;
  PPLReport report;
  std::vector<double> losses;
  double seconds = 0;
};

inline std::vector<std::vector<TokenId>> encode_all(const Vocab& vocab,
                                                    const std::vector<AnnotatedDocument>& docs) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(vocab.encode(d.serialized).ids);
  return out;
}

// Trains a fresh model on `cfg`'s serialization and reports its eval PPL.
// When `trained` is given the model is moved into it.
inline ArmResult run_arm(const AblationSetup& s, const DocConfig& cfg,
                         lm::Transformer<float>* trained = nullptr) {
  if (!s.train || !s.eval || !s.vocab) throw ContractError("ablation setup is incomplete");
  const auto t0 = std::chrono::steady_clock::now();
  lm::ModelConfig mc = s.model;
  mc.vocab_size = s.vocab->size();
  lm::Transformer<float> model(mc);
  const auto train_docs = encode_all(*s.vocab, build_documents(*s.train, cfg, s.ctx));
  lm::TrainHooks hooks;
  hooks.vocab_hash = s.vocab->hash();
  if (s.progress) hooks.on_step = [&](std::size_t step, double loss) { s.progress(cfg.name, step, loss); };
  ArmResult r;
  r.config = cfg;
  r.losses = lm::train(model, train_docs, s.train_config, hooks).losses;
  r.report = perplexity(model, *s.vocab, eval_docs(build_documents(*s.eval, cfg, s.ctx)), std::nullopt,
                        4096, cfg.fingerprint());
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (trained) *trained = std::move(model);
  return r;
}

inline std::vector<ArmResult> ablate_fields(const AblationSetup& s, const std::vector<DocConfig>& configs) {
  std::vector<ArmResult> out;
  out.reserve(configs.size());
  for (const auto& c : configs) out.push_back(run_arm(s, c));
  return out;
}

// Visual-NER arms at each k. k = 0 leaves the entity field empty, which is
// the caption-with-annotation arm.
inline std::map<std::size_t, ArmResult> ablate_topk(const AblationSetup& s, const std::vector<std::size_t>& ks,
                                                    const DocConfig& base = find_config(field_ablation_configs(),
                                                                                        "+ClipNE")) {
  std::map<std::size_t, ArmResult> out;
  for (std::size_t k : ks) {
    DocConfig c = base;
    c.k = k;
    c.name = "ClipNE@k=" + std::to_string(k);
    out.emplace(k, run_arm(s, c));
  }
  return out;
}

// The four meta fields permuted in place of each other; the rest of the
// order is untouched.
inline CanonicalOrder permute_meta(const CanonicalOrder& base, const std::vector<FieldTag>& meta_in_order) {
  const std::vector<FieldTag> slots_of = {FieldTag::kDomain, FieldTag::kDate, FieldTag::kTitle,
                                          FieldTag::kSummary};
  std::vector<FieldTag> tags = base.tags();
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (std::find(slots_of.begin(), slots_of.end(), tags[i]) != slots_of.end()) positions.push_back(i);
  }
  if (positions.size() != meta_in_order.size()) {
    throw ContractError("permute_meta: order does not hold exactly the permuted fields");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) tags[positions[i]] = meta_in_order[i];
  CanonicalOrder out(tags);
  if (!out.is_permutation_of(base)) throw ContractError("permute_meta: result is not a permutation");
  return out;
}

// Training order first, then three fixed permutations of
// domain/date/title/summary.
inline std::vector<CanonicalOrder> order_ablation_orders(const CanonicalOrder& trained) {
  using F = FieldTag;
  return {trained,
          permute_meta(trained, {F::kDate, F::kDomain, F::kTitle, F::kSummary}),
          permute_meta(trained, {F::kTitle, F::kDate, F::kDomain, F::kSummary}),
          permute_meta(trained, {F::kSummary, F::kDate, F::kDomain, F::kTitle})};
}

struct OrderResult {
  CanonicalOrder order;
  PPLReport report;
};

// Evaluates one trained model under each serialization order.
inline std::vector<OrderResult> ablate_order(lm::Transformer<float>& model, const Vocab& vocab,
                                             const std::vector<Article>& eval, const DocConfig& trained,
                                             const std::vector<CanonicalOrder>& orders,
                                             const PipelineContext& ctx) {
  std::vector<OrderResult> out;
  for (const auto& o : orders) {
    if (!o.is_permutation_of(trained.order)) {
      throw ContractError("order " + o.to_string() + " is not a permutation of " + trained.order.to_string());
    }
    DocConfig c = trained;
    c.order = o;
    out.push_back({o, perplexity(model, vocab, eval_docs(build_documents(eval, c, ctx)), std::nullopt, 4096,
                                 c.fingerprint())});
  }
  return out;
}

// Rows of a (label, ppl, tokens) table.
struct TableRow {
  std::string label;
  double ppl;
  std::size_t tokens;
  std::string fingerprint;
};

inline nlohmann::json table_to_json(const std::string& title, const std::vector<TableRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"label", r.label}, {"ppl", r.ppl}, {"tokens", r.tokens}, {"fingerprint", r.fingerprint}});
  }
  return {{"table", title}, {"rows", arr}};
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string table_to_csv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "label,ppl,tokens,fingerprint\n";
  for (const auto& r : rows) {
    os << csv_escape(r.label) << ',' << r.ppl << ',' << r.tokens << ',' << csv_escape(r.fingerprint) << '\n';
  }
  return os.str();
}

inline std::vector<TableRow> rows_from(const std::vector<ArmResult>& arms) {
  std::vector<TableRow> rows;
  for (const auto& a : arms) rows.push_back({a.config.name, a.report.ppl(), a.report.total_tokens, a.report.fingerprint});
  return rows;
}

inline std::vector<TableRow> rows_from(const std::map<std::size_t, ArmResult>& arms) {
  std::vector<TableRow> rows;
  for (const auto& [k, a] : arms) {
    rows.push_back({"k=" + std::to_string(k), a.report.ppl(), a.report.total_tokens, a.report.fingerprint});
  }
  return rows;
}

inline std::vector<TableRow> rows_from(const std::vector<OrderResult>& orders) {
  std::vector<TableRow> rows;
  for (const auto& o : orders) {
    rows.push_back({o.order.to_string(), o.report.ppl(), o.report.total_tokens, o.report.fingerprint});
  }
  return rows;
}

}  // namespace entlm
