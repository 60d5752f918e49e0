// Trains a nano model on a small synthetic corpus with entity lists and
// annotations, reports body perplexity, then samples one body.

#include <cstdio>
#include <string>

#include "entlm/entlm.hpp"

using namespace entlm;

int main(int argc, char** argv) {
  const std::size_t steps = argc > 1 ? std::stoul(argv[1]) : 300;

  const auto gazetteer = builtin_gazetteer();
  GazetteerTagger tagger(gazetteer);
  auto syn = make_synthetic_corpus(7, 240, gazetteer);
  const std::vector<Article> train(syn.articles.begin(), syn.articles.begin() + 200);
  const std::vector<Article> held_out(syn.articles.begin() + 200, syn.articles.end());

  const PipelineContext ctx{&tagger, nullptr, nullptr};
  const Vocab vocab = train_bpe(tokenizer_training_texts(train, ctx), 4096);
  const DocConfig cfg = find_config(field_ablation_configs(), "+NE");

  auto mc = lm::model_preset("nano", vocab.size());
  mc.seed = 1;
  lm::Transformer<float> model(mc);
  lm::TrainConfig tc;
  tc.total_steps = steps;
  tc.max_lr = 3e-3;
  tc.seed = 1;
  lm::TrainHooks hooks;
  hooks.on_step = [&](std::size_t step, double loss) {
    if ((step + 1) % 50 == 0) std::printf("step %4zu  loss %.3f\n", step + 1, loss);
  };
  lm::train(model, encode_all(vocab, build_documents(train, cfg, ctx)), tc, hooks);

  const auto eval = build_documents(held_out, cfg, ctx);
  std::printf("body ppl on %zu held-out articles: %.3f\n", eval.size(),
              perplexity(model, vocab, eval_docs(eval)).ppl());

  SamplerConfig sc;
  sc.p = 0.9;
  sc.seed = 7;
  sc.max_new_tokens = 120;
  const auto g = generate_field(model, vocab, body_context(eval.front().serialized), sc);
  std::printf("\nprompted with: %s\n\n%s\n[%s]\n", body_context(eval.front().serialized).c_str(),
              g.text.c_str(), std::string(stop_reason_name(g.stop)).c_str());
}
