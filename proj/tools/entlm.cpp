// entlm: corpus preparation, tokenizer and model training, evaluation,
// generation, visual NER and retrieval from the command line. Every
// subcommand writes a manifest next to its primary output.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "entlm/embedding_http.hpp"
#include "entlm/entlm.hpp"
#include "entlm/run_config.hpp"

using namespace entlm;
namespace fs = std::filesystem;

namespace {

// Flags that shadow RunConfig keys. Values given on the command line are
// applied after the config file.
class ConfigFlags {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option(flag, values_[key], help + " [" + key + "]");
  }

  RunConfig resolve(const std::string& config_path) const {
    RunConfig c;
    if (!config_path.empty()) c = load_run_config(config_path);
    for (const auto& [key, v] : values_) {
      if (!v.empty()) c.set(key, v);
    }
    c.validate();
    return c;
  }

 private:
  std::map<std::string, std::string> values_;
};

struct Invocation {
  std::string command;
  std::vector<std::string> argv;
  std::string config_path;
  ConfigFlags flags;
};

void add_doc_flags(CLI::App* app, ConfigFlags& f) {
  f.add(app, "--order", "corpus.order", "canonical order preset or comma list");
  f.add(app, "--ne-source", "entities.source", "entity list source: oracle|clip|caption|none");
  f.add(app, "--scope", "entities.scope", "annotation scope: none|body|narrative");
  f.add(app, "--k", "entities.k", "entities kept from visual NER");
  f.add(app, "--provider", "provider.endpoint", "embedding provider: stub|random|http://host:port");
  f.add(app, "--provider-dim", "provider.dim", "embedding dimension for in-process providers");
  f.add(app, "--seed", "run.seed", "seed");
}

void add_train_flags(CLI::App* app, ConfigFlags& f) {
  f.add(app, "--preset", "model.preset", "model preset: tiny|nano|base|medium|xl");
  f.add(app, "--steps", "train.total_steps", "optimizer steps");
  f.add(app, "--batch-size", "train.batch_size", "documents per step");
  f.add(app, "--lr", "train.max_lr", "peak learning rate");
  f.add(app, "--warmup", "train.warmup_fraction", "warmup fraction of steps");
  f.add(app, "--clip-norm", "train.clip_norm", "gradient norm clip");
  f.add(app, "--weight-decay", "train.weight_decay", "decoupled weight decay");
  f.add(app, "--checkpoint-every", "train.checkpoint_every", "periodic checkpoint interval in steps");
}

// Resources shared by the document pipeline.
struct Pipeline {
  Gazetteer gazetteer = builtin_gazetteer();
  GazetteerTagger tagger{gazetteer};
  std::unique_ptr<EmbeddingProvider> provider;
  CandidateIndex candidates;

  PipelineContext context() const { return {&tagger, provider.get(), provider ? &candidates : nullptr}; }
};

std::unique_ptr<EmbeddingProvider> make_provider(const RunConfig& c) {
  if (c.provider == "stub") return std::make_unique<SceneProvider>(c.provider_dim, c.seed);
  if (c.provider == "random") return std::make_unique<HashProvider>(c.provider_dim, c.seed);
  if (c.provider.starts_with("http://")) return std::make_unique<HttpProvider>(c.provider);
  throw ContractError("unknown provider '" + c.provider + "' (expected stub, random or an http:// URL)");
}

// The candidate index is built from `articles` only when the clip source
// needs it.
std::unique_ptr<Pipeline> make_pipeline(const RunConfig& c, const std::vector<Article>& articles,
                                        bool need_provider) {
  auto p = std::make_unique<Pipeline>();
  if (need_provider || c.ne_source == EntitySource::kClip) {
    p->provider = make_provider(c);
    p->candidates = build_candidate_index(articles, &p->tagger);
    p->candidates.embed(*p->provider);
  }
  return p;
}

DocConfig doc_config(const RunConfig& c) {
  DocConfig d;
  d.name = "run";
  d.order = canonical_order(c.order);
  d.source = c.ne_source;
  d.scope = c.scope;
  d.k = c.k;
  return d;
}

std::vector<Article> load_articles(const std::string& path, Manifest& m) {
  m.add_input(path);
  return load_corpus(path).articles;
}

std::string default_manifest(const std::string& out) { return out + ".manifest.json"; }

Manifest start_manifest(const Invocation& inv, const RunConfig& c) {
  Manifest m;
  m.command = inv.command;
  m.argv = inv.argv;
  m.config = c.to_json();
  m.extra["seed"] = c.seed;
  if (!inv.config_path.empty()) m.add_input(inv.config_path);
  return m;
}

void finish(Manifest& m, const std::vector<std::string>& outputs, const std::string& manifest_path) {
  for (const auto& o : outputs) m.add_output(o);
  m.write(manifest_path);
}

lm::Transformer<float> load_model(const std::string& ckpt, const Vocab& vocab, Manifest& m) {
  m.add_input(ckpt);
  auto c = lm::load_checkpoint(ckpt, vocab.hash());
  if (c.config.vocab_size != vocab.size()) {
    throw VocabMismatchError("checkpoint vocabulary size " + std::to_string(c.config.vocab_size) +
                             " differs from tokenizer size " + std::to_string(vocab.size()));
  }
  return lm::model_from_checkpoint(c);
}

Vocab load_vocab(const std::string& path, Manifest& m) {
  m.add_input(path);
  return Vocab::load(path);
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& part : split(s, ',')) {
    const auto t = trim(part);
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
      throw ContractError("expected a comma-separated list of non-negative integers, got '" + s + "'");
    }
    out.push_back(std::stoul(t));
  }
  return out;
}

nlohmann::ordered_json entity_list_json(const EntityList& ents) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : ents) {
    nlohmann::ordered_json j = {{"surface", e.surface}, {"category", category_name(e.category)}};
    if (e.score) j["score"] = *e.score;
    arr.push_back(j);
  }
  return arr;
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
  std::string corpus, out, corpus_out, manifest;
  std::size_t synthetic = 0;
};

void run_prepare(const Invocation& inv, const PrepareArgs& a) {
  const RunConfig c = inv.flags.resolve(inv.config_path);
  Manifest m = start_manifest(inv, c);
  std::vector<Article> articles;
  if (a.synthetic > 0) {
    if (!a.corpus.empty()) throw ContractError("give either --corpus or --synthetic, not both");
    articles = make_synthetic_corpus(c.seed, a.synthetic, builtin_gazetteer()).articles;
    m.extra["synthetic_articles"] = a.synthetic;
  } else {
    if (a.corpus.empty()) throw ContractError("prepare needs --corpus or --synthetic");
    articles = load_articles(a.corpus, m);
  }
  std::vector<std::string> outputs;
  if (!a.corpus_out.empty()) {
    write_corpus(articles, a.corpus_out);
    outputs.push_back(a.corpus_out);
  }
  const auto p = make_pipeline(c, articles, false);
  const auto cfg = doc_config(c);
  std::ostringstream os;
  for (const auto& article : articles) {
    const auto doc = build_document(article, cfg, p->context());
    auto j = article_to_json(article);
    j["entities"] = entity_list_json(doc.entities);
    j["serialized"] = doc.serialized;
    os << j.dump() << '\n';
  }
  write_file(a.out, os.str());
  outputs.push_back(a.out);
  m.extra["documents"] = articles.size();
  m.extra["doc_config"] = cfg.fingerprint();
  finish(m, outputs, a.manifest.empty() ? default_manifest(a.out) : a.manifest);
  std::printf("prepared %zu documents -> %s\n", articles.size(), a.out.c_str());
}

struct TokenizerArgs {
  std::string corpus, out, manifest;
};

void run_train_tokenizer(const Invocation& inv, const TokenizerArgs& a) {
  const RunConfig c = inv.flags.resolve(inv.config_path);
  Manifest m = start_manifest(inv, c);
  const auto articles = load_articles(a.corpus, m);
  Pipeline p;
  const Vocab v = train_bpe(tokenizer_training_texts(articles, p.context()), c.vocab_size);
  v.save(a.out);
  m.extra["merges"] = v.num_merges();
  m.extra["vocab_hash"] = hex64(v.hash());
  finish(m, {a.out}, a.manifest.empty() ? default_manifest(a.out) : a.manifest);
  std::printf("vocab of %zu ids (%zu merges) -> %s\n", v.size(), v.num_merges(), a.out.c_str());
}

struct TrainArgs {
  std::string corpus, vocab, out, log, manifest;
};

void run_train(const Invocation& inv, const TrainArgs& a) {
  RunConfig c = inv.flags.resolve(inv.config_path);
  Manifest m = start_manifest(inv, c);
  const auto articles = load_articles(a.corpus, m);
  const Vocab vocab = load_vocab(a.vocab, m);
  const auto p = make_pipeline(c, articles, false);
  const auto cfg = doc_config(c);
  const auto docs = encode_all(vocab, build_documents(articles, cfg, p->context()));
  auto mc = lm::model_preset(c.model_preset, vocab.size());
  mc.seed = c.seed;
  lm::Transformer<float> model(mc);
  auto tc = c.train;
  tc.seed = c.seed;
  if (tc.checkpoint_every > 0) tc.checkpoint_prefix = a.out;
  lm::TrainHooks hooks;
  hooks.vocab_hash = vocab.hash();
  const std::size_t every = std::max<std::size_t>(1, tc.total_steps / 20);
  hooks.on_step = [&](std::size_t step, double loss) {
    if ((step + 1) % every == 0 || step + 1 == tc.total_steps) {
      std::fprintf(stderr, "step %zu/%zu loss %.4f\n", step + 1, tc.total_steps, loss);
    }
  };
  const auto r = lm::train(model, docs, tc, hooks);
  auto ckpt = lm::make_checkpoint(model, r.steps, vocab.hash());
  ckpt.metadata = {{"config_fingerprint", c.fingerprint()}, {"doc_config", cfg.fingerprint()}};
  lm::save_checkpoint(ckpt, a.out);
  std::vector<std::string> outputs = {a.out};
  if (!a.log.empty()) {
    std::ostringstream os;
    os.precision(10);
    os << "step,loss,grad_norm,lr\n";
    for (std::size_t i = 0; i < r.losses.size(); ++i) {
      os << i << ',' << r.losses[i] << ',' << r.grad_norms[i] << ',' << lm::learning_rate(i, tc) << '\n';
    }
    write_file(a.log, os.str());
    outputs.push_back(a.log);
  }
  m.extra["parameters"] = mc.num_parameters();
  m.extra["final_loss"] = r.losses.back();
  m.extra["doc_config"] = cfg.fingerprint();
  finish(m, outputs, a.manifest.empty() ? default_manifest(a.out) : a.manifest);
  std::printf("trained %zu steps, final loss %.4f -> %s\n", r.steps, r.losses.back(), a.out.c_str());
}

struct EvalArgs {
  std::string corpus, vocab, ckpt, out, manifest;
};

void run_eval_ppl(const Invocation& inv, const EvalArgs& a) {
  const RunConfig c = inv.flags.resolve(inv.config_path);
  Manifest m = start_manifest(inv, c);
  const auto articles = load_articles(a.corpus, m);
  const Vocab vocab = load_vocab(a.vocab, m);
  auto model = load_model(a.ckpt, vocab, m);
  const auto p = make_pipeline(c, articles, false);
  const auto cfg = doc_config(c);
  const auto report =
      perplexity(model, vocab, eval_docs(build_documents(articles, cfg, p->context())), std::nullopt, 4096,
                 cfg.fingerprint());
  auto j = report.to_json();
  j["parameters"] = model.config().num_parameters();
  write_file(a.out, j.dump(2) + "\n");
  m.extra["ppl"] = report.ppl();
  finish(m, {a.out}, a.manifest.empty() ? default_manifest(a.out) : a.manifest);
  std::printf("body ppl %.4f over %zu tokens -> %s\n", report.ppl(), report.total_tokens, a.out.c_str());
}

struct AblateArgs {
  std::string kind = "fields";
  std::string corpus, eval_corpus, vocab, ckpt, out_dir, manifest, ks = "0,5,10,20", arms;
};

void run_ablate(const Invocation& inv, const AblateArgs& a) {
  RunConfig c = inv.flags.resolve(inv.config_path);
  Manifest m = start_manifest(inv, c);
  fs::create_directories(a.out_dir);
  const auto eval = load_articles(a.eval_corpus, m);
  const Vocab vocab = load_vocab(a.vocab, m);
  std::vector<TableRow> rows;
  std::string title;
  if (a.kind == "order") {
    if (a.ckpt.empty()) throw ContractError("order ablation evaluates a trained checkpoint; pass --ckpt");
    auto model = load_model(a.ckpt, vocab, m);
    const auto p = make_pipeline(c, eval, false);
    const auto cfg = doc_config(c);
    rows = rows_from(ablate_order(model, vocab, eval, cfg, order_ablation_orders(cfg.order), p->context()));
    title = "canonical order";
  } else {
    const auto train = load_articles(a.corpus, m);
    const auto p = make_pipeline(c, train, a.kind == "topk");
    AblationSetup s;
    s.train = &train;
    s.eval = &eval;
    s.vocab = &vocab;
    s.ctx = p->context();
    s.model = lm::model_preset(c.model_preset);
    s.model.seed = c.seed;
    s.train_config = c.train;
    s.train_config.seed = c.seed;
    s.progress = [&](const std::string& arm, std::size_t step, double loss) {
      if ((step + 1) % std::max<std::size_t>(1, s.train_config.total_steps / 5) == 0) {
        std::fprintf(stderr, "%s step %zu loss %.4f\n", arm.c_str(), step + 1, loss);
      }
    };
    if (a.kind == "fields") {
      auto configs = field_ablation_configs(c.k);
      if (!a.arms.empty()) {
        std::vector<DocConfig> chosen;
        for (const auto& name : split(a.arms, ',')) chosen.push_back(find_config(configs, trim(name)));
        configs = chosen;
      }
      rows = rows_from(ablate_fields(s, configs));
      title = "entity fields";
    } else if (a.kind == "topk") {
      rows = rows_from(ablate_topk(s, parse_ks(a.ks)));
      title = "visual NER top-k";
    } else {
      throw ContractError("unknown ablation kind '" + a.kind + "' (expected fields, topk or order)");
    }
  }
  const auto json_path = (fs::path(a.out_dir) / (a.kind + ".json")).string();
  const auto csv_path = (fs::path(a.out_dir) / (a.kind + ".csv")).string();
  write_file(json_path, table_to_json(title, rows).dump(2) + "\n");
  write_file(csv_path, table_to_csv(rows));
  for (const auto& r : rows) std::printf("%-40s ppl %.4f  tokens %zu\n", r.label.c_str(), r.ppl, r.tokens);
  finish(m, {json_path, csv_path},
         a.manifest.empty() ? (fs::path(a.out_dir) / (a.kind + ".manifest.json")).string() : a.manifest);
}

struct GenerateArgs {
  std::string ckpt, vocab, context_file, out, manifest;
  bool strip_categories = false;
};

void run_generate(const Invocation& inv, const GenerateArgs& a) {
  const RunConfig c = inv.flags.resolve(inv.config_path);
  Manifest m = start_manifest(inv, c);
  const Vocab vocab = load_vocab(a.vocab, m);
  auto model = load_model(a.ckpt, vocab, m);
  m.add_input(a.context_file);
  std::string context(trim(read_file(a.context_file)));
  SamplerConfig sc = c.sampler;
  sc.seed = c.seed;
  const auto g = generate_field(model, vocab, context, sc);
  const std::string& body = a.strip_categories ? g.stripped : g.text;
  const nlohmann::ordered_json j = {{"body", body},
                                    {"annotated", g.text},
                                    {"stop", stop_reason_name(g.stop)},
                                    {"malformed", g.malformed()},
                                    {"tokens", g.tokens.size()},
                                    {"p", sc.p},
                                    {"temperature", sc.temperature},
                                    {"seed", sc.seed}};
  std::vector<std::string> outputs;
  if (!a.out.empty()) {
    write_file(a.out, j.dump(2) + "\n");
    outputs.push_back(a.out);
  }
  std::printf("%s\n", body.c_str());
  if (g.malformed()) std::fprintf(stderr, "warning: generation stopped on an unexpected boundary token\n");
  const std::string manifest = !a.manifest.empty() ? a.manifest
                               : !a.out.empty()    ? default_manifest(a.out)
                                                   : default_manifest(a.context_file + ".generate");
  finish(m, outputs, manifest);
}

struct VisualNerArgs {
  std::string corpus, out, manifest;
  bool per_article = false;
};

void run_visual_ner(const Invocation& inv, const VisualNerArgs& a) {
  const RunConfig c = inv.flags.resolve(inv.config_path);
  Manifest m = start_manifest(inv, c);
  const auto articles = load_articles(a.corpus, m);
  const auto p = make_pipeline(c, articles, true);
  if (c.k == 0) throw ContractError("visual-ner needs k >= 1");
  std::ostringstream os;
  double recall_sum = 0;
  std::size_t scored = 0;
  for (const auto& article : articles) {
    if (article.image_refs.empty()) continue;
    const auto oracle = oracle_entities(article, &p->tagger);
    std::optional<CandidateIndex> own;
    if (a.per_article) {
      std::set<EntityKey> keys;
      for (const auto& e : oracle) keys.insert(entity_key(e));
      own = p->candidates.restricted(keys);
      if (own->empty()) continue;
    }
    const auto pred = visual_ner(article.image_refs.front(), own ? *own : p->candidates, *p->provider, c.k);
    nlohmann::ordered_json j = {{"id", article.id}, {"image", article.image_refs.front()},
                                {"entities", entity_list_json(pred)}};
    if (!oracle.empty()) {
      const double r = ner_recall(pred, oracle);
      j["recall"] = r;
      recall_sum += r;
      ++scored;
    }
    os << j.dump() << '\n';
  }
  write_file(a.out, os.str());
  const double mean = scored ? recall_sum / static_cast<double>(scored) : 0.0;
  m.extra["mean_recall"] = mean;
  m.extra["candidates"] = p->candidates.size();
  m.extra["provider"] = p->provider->name();
  m.extra["per_article"] = a.per_article;
  finish(m, {a.out}, a.manifest.empty() ? default_manifest(a.out) : a.manifest);
  std::printf("visual NER top-%zu over %zu images, mean recall %.4f -> %s\n", c.k, scored, mean, a.out.c_str());
}

struct RetrieveArgs {
  std::string corpus, out, manifest, mode = "ne", ks = "1,5,10";
  std::size_t sample = 0;
};

void run_retrieve(const Invocation& inv, const RetrieveArgs& a) {
  const RunConfig c = inv.flags.resolve(inv.config_path);
  Manifest m = start_manifest(inv, c);
  const auto articles = load_articles(a.corpus, m);
  const auto provider = make_provider(c);
  const GazetteerTagger tagger(builtin_gazetteer());
  const auto report = evaluate_retrieval(articles, parse_retrieval_mode(a.mode), *provider, parse_ks(a.ks), c.seed,
                                         a.sample, &tagger);
  write_file(a.out, report.to_json().dump(2) + "\n");
  m.extra["provider"] = provider->name();
  m.extra["sample_ids"] = report.sample_ids;
  finish(m, {a.out}, a.manifest.empty() ? default_manifest(a.out) : a.manifest);
  for (const auto& e : report.entries) {
    std::printf("%-7s %-17s R@%-3zu %.4f (n=%zu)\n", e.mode.c_str(), e.direction.c_str(), e.k, e.recall, e.n);
  }
}

struct ReportArgs {
  std::vector<std::string> tables, evals;
  std::string out_dir, manifest;
};

// Ablation tables become bar charts (top-k tables a line chart); eval-ppl
// reports together give PPL against parameter count.
void run_report(const Invocation& inv, const ReportArgs& a) {
  const RunConfig c = inv.flags.resolve(inv.config_path);
  Manifest m = start_manifest(inv, c);
  fs::create_directories(a.out_dir);
  std::vector<std::string> outputs;
  for (const auto& path : a.tables) {
    m.add_input(path);
    const auto j = nlohmann::json::parse(read_file(path));
    const std::string title = j.at("table");
    std::vector<std::pair<std::string, double>> bars;
    std::vector<std::pair<double, double>> points;
    bool numeric = true;
    for (const auto& row : j.at("rows")) {
      const std::string label = row.at("label");
      bars.emplace_back(label, row.at("ppl").get<double>());
      if (label.rfind("k=", 0) == 0) points.emplace_back(std::stod(label.substr(2)), row.at("ppl").get<double>());
      else numeric = false;
    }
    const auto stem = fs::path(path).stem().string();
    const auto svg = (fs::path(a.out_dir) / (stem + ".svg")).string();
    write_file(svg, numeric && points.size() >= 2 ? svg_line_chart(title, "k", "body PPL", points)
                                                  : svg_bar_chart(title, "body PPL", bars));
    outputs.push_back(svg);
  }
  if (!a.evals.empty()) {
    std::vector<std::pair<double, double>> points;
    for (const auto& path : a.evals) {
      m.add_input(path);
      const auto j = nlohmann::json::parse(read_file(path));
      points.emplace_back(j.at("parameters").get<double>(), j.at("ppl").get<double>());
    }
    std::sort(points.begin(), points.end());
    const auto svg = (fs::path(a.out_dir) / "ppl_vs_parameters.svg").string();
    write_file(svg, svg_line_chart("PPL vs parameters", "parameters", "body PPL", points));
    outputs.push_back(svg);
  }
  if (outputs.empty()) throw ContractError("report needs at least one --table or --eval input");
  finish(m, outputs, a.manifest.empty() ? (fs::path(a.out_dir) / "report.manifest.json").string() : a.manifest);
  for (const auto& o : outputs) std::printf("%s\n", o.c_str());
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return 3;
  if (dynamic_cast<const ValidationError*>(&e)) return 4;
  if (dynamic_cast<const VocabMismatchError*>(&e)) return 8;
  if (dynamic_cast<const ContractError*>(&e)) return 5;
  if (dynamic_cast<const TransportError*>(&e)) return 6;
  if (dynamic_cast<const VersionError*>(&e)) return 8;
  if (dynamic_cast<const IntegrityError*>(&e)) return 7;
  if (dynamic_cast<const DivergenceError*>(&e)) return 9;
  return 1;
}

std::string error_class(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return "parse error";
  if (dynamic_cast<const ValidationError*>(&e)) return "invalid input";
  if (dynamic_cast<const VocabMismatchError*>(&e)) return "vocabulary mismatch";
  if (dynamic_cast<const ContractError*>(&e)) return "usage error";
  if (dynamic_cast<const TransportError*>(&e)) return "transport error";
  if (dynamic_cast<const VersionError*>(&e)) return "version error";
  if (dynamic_cast<const IntegrityError*>(&e)) return "integrity error";
  if (dynamic_cast<const DivergenceError*>(&e)) return "training diverged";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entity-aware news language modelling toolkit"};
  app.require_subcommand(1);
  app.failure_message([](const CLI::App*, const CLI::Error& e) {
    return "entlm: usage error: " + std::string(e.what()) + "\n";
  });
  app.set_version_flag("--version", std::string(ENTLM_VERSION));

  Invocation inv;
  inv.argv.assign(argv, argv + argc);
  auto common = [&](CLI::App* sub, std::string& manifest) {
    sub->add_option("--config", inv.config_path, "run configuration file")->check(CLI::ExistingFile);
    sub->add_option("--manifest", manifest, "manifest path (default: next to the output)");
  };

  PrepareArgs prep;
  auto* s_prep = app.add_subcommand("prepare", "serialize a corpus into annotated documents");
  s_prep->add_option("--corpus", prep.corpus, "input JSONL corpus")->check(CLI::ExistingFile);
  s_prep->add_option("--synthetic", prep.synthetic, "generate this many synthetic articles instead");
  s_prep->add_option("--corpus-out", prep.corpus_out, "also write the raw articles as JSONL");
  s_prep->add_option("--out", prep.out, "annotated JSONL output")->required();
  common(s_prep, prep.manifest);
  add_doc_flags(s_prep, inv.flags);

  TokenizerArgs tok;
  auto* s_tok = app.add_subcommand("train-tokenizer", "learn a byte-level BPE vocabulary");
  s_tok->add_option("--corpus", tok.corpus, "training corpus")->required()->check(CLI::ExistingFile);
  s_tok->add_option("--out", tok.out, "vocab JSON output")->required();
  inv.flags.add(s_tok, "--vocab-size", "model.vocab_size", "total vocabulary size");
  common(s_tok, tok.manifest);

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "train a language model from scratch");
  s_train->add_option("--corpus", tr.corpus, "training corpus")->required()->check(CLI::ExistingFile);
  s_train->add_option("--vocab", tr.vocab, "vocab JSON")->required()->check(CLI::ExistingFile);
  s_train->add_option("--out", tr.out, "checkpoint output")->required();
  s_train->add_option("--log", tr.log, "per-step CSV log");
  common(s_train, tr.manifest);
  add_doc_flags(s_train, inv.flags);
  add_train_flags(s_train, inv.flags);

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval-ppl", "body perplexity of a checkpoint");
  s_eval->add_option("--corpus", ev.corpus, "evaluation corpus")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--vocab", ev.vocab, "vocab JSON")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--ckpt", ev.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--out", ev.out, "JSON report output")->required();
  common(s_eval, ev.manifest);
  add_doc_flags(s_eval, inv.flags);

  AblateArgs ab;
  auto* s_ab = app.add_subcommand("ablate", "entity-field, top-k or canonical-order ablation");
  s_ab->add_option("--kind", ab.kind, "fields|topk|order")->capture_default_str();
  s_ab->add_option("--corpus", ab.corpus, "training corpus (fields, topk)")->check(CLI::ExistingFile);
  s_ab->add_option("--eval-corpus", ab.eval_corpus, "evaluation corpus")->required()->check(CLI::ExistingFile);
  s_ab->add_option("--vocab", ab.vocab, "vocab JSON")->required()->check(CLI::ExistingFile);
  s_ab->add_option("--ckpt", ab.ckpt, "trained checkpoint (order)")->check(CLI::ExistingFile);
  s_ab->add_option("--ks", ab.ks, "k values for the top-k ablation")->capture_default_str();
  s_ab->add_option("--arms", ab.arms, "comma list of field-ablation arms (default: all)");
  s_ab->add_option("--out-dir", ab.out_dir, "directory for JSON, CSV and manifest")->required();
  common(s_ab, ab.manifest);
  add_doc_flags(s_ab, inv.flags);
  add_train_flags(s_ab, inv.flags);

  GenerateArgs gen;
  auto* s_gen = app.add_subcommand("generate", "sample an article body by nucleus sampling");
  s_gen->add_option("--ckpt", gen.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  s_gen->add_option("--vocab", gen.vocab, "vocab JSON")->required()->check(CLI::ExistingFile);
  s_gen->add_option("--context-file", gen.context_file, "serialized prefix ending in <start-body>")
      ->required()
      ->check(CLI::ExistingFile);
  s_gen->add_option("--out", gen.out, "JSON output");
  s_gen->add_flag("--strip-categories", gen.strip_categories, "remove category tokens from the printed body");
  inv.flags.add(s_gen, "--p", "sampler.p", "nucleus mass");
  inv.flags.add(s_gen, "--temperature", "sampler.temperature", "softmax temperature");
  inv.flags.add(s_gen, "--max-new-tokens", "sampler.max_new_tokens", "token budget");
  inv.flags.add(s_gen, "--seed", "run.seed", "sampling seed");
  common(s_gen, gen.manifest);

  VisualNerArgs vn;
  auto* s_vn = app.add_subcommand("visual-ner", "rank candidate entities for each article image");
  s_vn->add_option("--corpus", vn.corpus, "corpus with image references")->required()->check(CLI::ExistingFile);
  s_vn->add_option("--out", vn.out, "JSONL predictions")->required();
  s_vn->add_flag("--per-article", vn.per_article, "rank only the article's own entities");
  common(s_vn, vn.manifest);
  add_doc_flags(s_vn, inv.flags);

  RetrieveArgs rt;
  auto* s_rt = app.add_subcommand("retrieve", "image-article retrieval Recall@K");
  s_rt->add_option("--corpus", rt.corpus, "corpus with image references")->required()->check(CLI::ExistingFile);
  s_rt->add_option("--mode", rt.mode, "text-only|ne|ne-ea")->capture_default_str();
  s_rt->add_option("--ks", rt.ks, "recall cut-offs")->capture_default_str();
  s_rt->add_option("--sample", rt.sample, "articles sampled (0: all)");
  s_rt->add_option("--out", rt.out, "JSON report output")->required();
  common(s_rt, rt.manifest);
  inv.flags.add(s_rt, "--provider", "provider.endpoint", "embedding provider: stub|random|http://host:port");
  inv.flags.add(s_rt, "--provider-dim", "provider.dim", "embedding dimension for in-process providers");
  inv.flags.add(s_rt, "--seed", "run.seed", "sampling seed");

  ReportArgs rp;
  auto* s_rp = app.add_subcommand("report", "render ablation tables and PPL-vs-size as SVG");
  s_rp->add_option("--table", rp.tables, "ablation JSON from `ablate` (repeatable)")->check(CLI::ExistingFile);
  s_rp->add_option("--eval", rp.evals, "eval-ppl JSON report (repeatable)")->check(CLI::ExistingFile);
  s_rp->add_option("--out-dir", rp.out_dir, "directory for SVG files")->required();
  common(s_rp, rp.manifest);

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto* sub : app.get_subcommands()) {
      inv.command = sub->get_name();
      if (sub == s_prep) run_prepare(inv, prep);
      else if (sub == s_tok) run_train_tokenizer(inv, tok);
      else if (sub == s_train) run_train(inv, tr);
      else if (sub == s_eval) run_eval_ppl(inv, ev);
      else if (sub == s_ab) run_ablate(inv, ab);
      else if (sub == s_gen) run_generate(inv, gen);
      else if (sub == s_vn) run_visual_ner(inv, vn);
      else if (sub == s_rt) run_retrieve(inv, rt);
      else if (sub == s_rp) run_report(inv, rp);
    }
  } catch (const std::exception& e) {
    std::cerr << "entlm " << inv.command << ": " << error_class(e) << ": " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
