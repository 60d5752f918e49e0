#include <gtest/gtest.h>

#include <cmath>

#include "entlm/retrieval.hpp"
#include "entlm/synthetic.hpp"
#include "generators.hpp"

using namespace entlm;

namespace {

Article article(const std::string& id, const std::string& title, const std::string& body) {
  Article a;
  a.id = id;
  a.fields[FieldTag::kTitle] = title;
  a.fields[FieldTag::kBody] = body;
  a.image_refs = {"img/" + id};
  return a;
}

// Returns a fixed number of vectors regardless of the request.
class ShortProvider : public EmbeddingProvider {
 public:
  EmbedResponse embed(const EmbedRequest&) const override { return {2, {{1, 0}}}; }
  std::size_t dim() const override { return 2; }
  std::string name() const override { return "short"; }
};

class DriftProvider : public EmbeddingProvider {
 public:
  EmbedResponse embed(const EmbedRequest& r) const override {
    EmbedResponse out{2, {}};
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      out.vectors.push_back(std::vector<float>(i == 0 ? 2 : 3, 1.f));
    }
    return out;
  }
  std::size_t dim() const override { return 2; }
  std::string name() const override { return "drift"; }
};

}  // namespace

TEST(TextInput, Modes) {
  const auto a = article("1", "Alki wins", "Alki beat Bo.");
  const std::vector<EntitySpan> spans = {{FieldTag::kTitle, 0, 4, "Alki", EntityCategory::kOrg},
                                         {FieldTag::kBody, 0, 4, "Alki", EntityCategory::kOrg},
                                         {FieldTag::kBody, 10, 12, "Bo", EntityCategory::kPerson}};
  const auto ents = dedup_entities(spans);
  EXPECT_EQ(build_text_input(a, RetrievalMode::kTextOnly, ents, spans, 512), "Alki wins Alki beat Bo.");
  EXPECT_EQ(build_text_input(a, RetrievalMode::kNe, ents, spans, 512), "Alki; Bo Alki wins Alki beat Bo.");
  EXPECT_EQ(build_text_input(a, RetrievalMode::kNeEa, ents, spans, 512),
            "Alki; Bo Alki <|ORG|> wins Alki <|ORG|> beat Bo <|PERSON|>.");
  EXPECT_EQ(build_text_input(a, RetrievalMode::kNe, {}, spans, 512), "Alki wins Alki beat Bo.");
  EXPECT_EQ(build_text_input(a, RetrievalMode::kTextOnly, ents, spans, 12), "Alki wins");
  EXPECT_EQ(build_text_input(a, RetrievalMode::kNeEa, ents, spans, 14), "Alki; Bo Alki <|ORG|>");
}

TEST(TextInput, ModeNames) {
  for (auto m : {RetrievalMode::kTextOnly, RetrievalMode::kNe, RetrievalMode::kNeEa}) {
    EXPECT_EQ(parse_retrieval_mode(retrieval_mode_name(m)), m);
  }
  EXPECT_THROW(parse_retrieval_mode("clip"), ContractError);
}

// Annotation never changes which text survives truncation, and the cut
// respects the limit and UTF-8 boundaries.
TEST(TextInput, StrippedAnnotatedEqualsPlainProperty) {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    auto g = gen::gazetteer(rng, 1 + rng.index(6));
    GazetteerTagger t(g);
    auto a = gen::article(rng, g, "r");
    const auto spans = article_spans(a, &t);
    const auto ents = dedup_entities(spans);
    const std::size_t limit = 1 + rng.index(120);
    const auto ne = build_text_input(a, RetrievalMode::kNe, ents, spans, limit);
    const auto ea = build_text_input(a, RetrievalMode::kNeEa, ents, spans, limit);
    EXPECT_EQ(strip_annotations(ea), ne);
    EXPECT_LE(ne.size(), limit);
    EXPECT_TRUE(is_valid_utf8(ne));
    const auto full = build_text_input(a, RetrievalMode::kNe, ents, spans, 100000);
    EXPECT_EQ(full.substr(0, ne.size()), ne);
    if (ne.size() < full.size() && !ne.empty()) {
      EXPECT_FALSE(is_ascii_space(ne.back()));
    }
  }
}

TEST(EmbedBatch, NormalizesAndChunks) {
  HashProvider p(8);
  std::vector<std::string> items;
  for (int i = 0; i < 600; ++i) items.push_back("x" + std::to_string(i));
  const auto v = embed_batch(items, EmbedKind::kText, p);
  ASSERT_EQ(v.size(), 600u);
  for (const auto& x : v) EXPECT_NEAR(l2_norm(x), 1.0, 1e-6);
  EXPECT_EQ(v[599], p.vector_for(EmbedKind::kText, "x599"));
  EXPECT_THROW(embed_batch({}, EmbedKind::kText, p), ContractError);
  EXPECT_THROW(embed_batch({"a", "b"}, EmbedKind::kText, ShortProvider()), TransportError);
  EXPECT_THROW(embed_batch({"a", "b"}, EmbedKind::kText, DriftProvider()), TransportError);
}

TEST(Rank, DotProducts) {
  const auto s = rank({{1, 0}, {0, 1}}, {{1, 0}, {0.6f, 0.8f}, {0, 1}});
  EXPECT_EQ(s.rows(), 2);
  EXPECT_EQ(s.cols(), 3);
  EXPECT_NEAR(s(0, 1), 0.6, 1e-7);
  EXPECT_NEAR(s(1, 2), 1.0, 1e-12);
  EXPECT_THROW(rank({{1, 0}}, {{1, 0, 0}}), ContractError);
}

TEST(Retrieval, PerfectPairingGivesFullRecall) {
  std::vector<Article> corpus;
  for (int i = 0; i < 30; ++i) {
    corpus.push_back(article(std::to_string(i), "t", "doc" + std::to_string(i) + " end"));
  }
  KeyedProvider p([](EmbedKind kind, const std::string& s) {
    if (kind == EmbedKind::kImage) return s.substr(4);
    const auto at = s.find("doc");
    return s.substr(at + 3, s.find(' ', at) - at - 3);
  });
  const auto r = evaluate_retrieval(corpus, RetrievalMode::kNe, p, {1, 5}, 3);
  EXPECT_EQ(r.entries.size(), 4u);
  EXPECT_DOUBLE_EQ(r.recall("image-to-article", 1), 1.0);
  EXPECT_DOUBLE_EQ(r.recall("article-to-image", 1), 1.0);
  EXPECT_EQ(r.entries[0].n, 30u);
  EXPECT_EQ(r.to_json().size(), 4u);
  EXPECT_THROW(r.recall("image-to-article", 2), ContractError);
}

TEST(Retrieval, RandomProviderIsNearChance) {
  const auto g = builtin_gazetteer();
  GazetteerTagger t(g);
  auto s = make_synthetic_corpus(11, 400, g);
  HashProvider p(64, 5);
  const auto r = evaluate_retrieval(s.articles, RetrievalMode::kTextOnly, p, {10}, 1, 0, &t);
  const double q = 10.0 / 400.0;
  const double sigma = std::sqrt(q * (1 - q) / 400.0);
  EXPECT_NEAR(r.recall("image-to-article", 10), q, 4 * sigma);
  EXPECT_NEAR(r.recall("article-to-image", 10), q, 4 * sigma);
}

TEST(Retrieval, SeededSample) {
  std::vector<Article> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back(article(std::to_string(i), "t", "b"));
  HashProvider p(8);
  const auto a = evaluate_retrieval(corpus, RetrievalMode::kTextOnly, p, {1}, 7, 10);
  const auto b = evaluate_retrieval(corpus, RetrievalMode::kTextOnly, p, {1}, 7, 10);
  const auto c = evaluate_retrieval(corpus, RetrievalMode::kTextOnly, p, {1}, 8, 10);
  EXPECT_EQ(a.sample_ids.size(), 10u);
  EXPECT_EQ(a.sample_ids, b.sample_ids);
  EXPECT_NE(a.sample_ids, c.sample_ids);
  std::vector<std::size_t> all = sample_indices(50, 0, 1);
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(all[i], i);
}

TEST(Retrieval, Contracts) {
  HashProvider p(8);
  auto a = article("1", "t", "b");
  a.image_refs.clear();
  EXPECT_THROW(evaluate_retrieval({a}, RetrievalMode::kNe, p, {1}, 0), ContractError);
  EXPECT_THROW(evaluate_retrieval({}, RetrievalMode::kNe, p, {1}, 0), ContractError);
  EXPECT_THROW(evaluate_retrieval({article("1", "t", "b")}, RetrievalMode::kNe, p, {2}, 0), ContractError);
}
