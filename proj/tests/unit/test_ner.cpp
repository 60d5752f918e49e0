#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "entlm/ner.hpp"
#include "entlm/synthetic.hpp"
#include "generators.hpp"

using namespace entlm;

TEST(Tagger, DirectHit) {
  GazetteerTagger t({{"Stephen Curry", EntityCategory::kPerson, {}}});
  auto spans = t.tag("Stephen Curry scored.", FieldTag::kBody);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].start, 0u);
  EXPECT_EQ(spans[0].end, 13u);
  EXPECT_EQ(spans[0].category, EntityCategory::kPerson);
}

TEST(Tagger, EmptyText) {
  GazetteerTagger t({{"A", EntityCategory::kOrg, {}}});
  EXPECT_TRUE(tag_entities("", t).empty());
}

TEST(Tagger, LongestMatchWins) {
  GazetteerTagger t({{"New York", EntityCategory::kGpe, {}}, {"New York Times", EntityCategory::kOrg, {}}});
  auto spans = t.tag("the New York Times said", FieldTag::kBody);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].surface, "New York Times");
  EXPECT_EQ(spans[0].category, EntityCategory::kOrg);
}

TEST(Tagger, RespectsWordBoundaries) {
  GazetteerTagger t({{"Al", EntityCategory::kPerson, {}}});
  EXPECT_TRUE(t.tag("Alki", FieldTag::kBody).empty());
  EXPECT_EQ(t.tag("Al, Alki", FieldTag::kBody).size(), 1u);
}

TEST(Tagger, SpansNeverOverlapAndSliceProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    auto g = gen::gazetteer(rng, 1 + rng.index(10));
    GazetteerTagger t(g);
    const std::string text = gen::mention_text(rng, g, rng.index(30));
    auto spans = t.tag(text, FieldTag::kTitle);
    for (std::size_t i = 0; i < spans.size(); ++i) {
      EXPECT_LT(spans[i].start, spans[i].end);
      EXPECT_LE(spans[i].end, text.size());
      EXPECT_EQ(text.substr(spans[i].start, spans[i].end - spans[i].start), spans[i].surface);
      EXPECT_EQ(spans[i].field, FieldTag::kTitle);
      if (i) EXPECT_LE(spans[i - 1].end, spans[i].start);
    }
  }
}

TEST(OracleEntities, Dedup) {
  GazetteerTagger t({{"Alki", EntityCategory::kOrg, {}}});
  Article a;
  a.id = "x";
  a.fields[FieldTag::kBody] = "Alki met Alki.";
  auto e = oracle_entities(a, &t);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0], (Entity{"Alki", EntityCategory::kOrg, {}}));
}

TEST(OracleEntities, SuppliedSpansTakePrecedence) {
  GazetteerTagger t({{"Alki", EntityCategory::kOrg, {}}});
  Article a;
  a.id = "x";
  a.fields[FieldTag::kBody] = "Alki met Bo.";
  a.oracle_entities = std::vector<EntitySpan>{{FieldTag::kBody, 9, 11, "Bo", EntityCategory::kPerson}};
  auto e = oracle_entities(a, &t);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].surface, "Bo");
}

TEST(OracleEntities, FoldedDuplicatesCollapse) {
  EntityList e = dedup_entities({{FieldTag::kBody, 0, 4, "Alki", EntityCategory::kOrg},
                                 {FieldTag::kBody, 5, 9, "ALKI", EntityCategory::kOrg},
                                 {FieldTag::kBody, 10, 14, "Alki", EntityCategory::kPerson}});
  EXPECT_EQ(e.size(), 2u);
}

// The generator logs each entity it places; the tagger must recover exactly
// that list, in the same first-occurrence order.
TEST(OracleEntities, MatchesSyntheticInstantiationLog) {
  const auto g = builtin_gazetteer();
  GazetteerTagger t(g);
  auto s = make_synthetic_corpus(7, 200, g);
  for (std::size_t i = 0; i < s.articles.size(); ++i) {
    EXPECT_EQ(oracle_entities(s.articles[i], &t), s.instantiated[i]) << s.articles[i].id;
  }
}

TEST(CandidateIndex, Union) {
  GazetteerTagger t({{"A", EntityCategory::kOrg, {}}, {"B", EntityCategory::kGpe, {}}});
  Article a1, a2;
  a1.id = "1";
  a1.fields[FieldTag::kBody] = "A x";
  a2.id = "2";
  a2.fields[FieldTag::kBody] = "B and A";
  auto idx = build_candidate_index({a1, a2}, &t);
  ASSERT_EQ(idx.size(), 2u);
  EXPECT_EQ(idx.entries()[0].surface, "A");
  EXPECT_EQ(idx.entries()[1].surface, "B");
}

TEST(CandidateIndex, EmptyArticles) {
  GazetteerTagger t({{"A", EntityCategory::kOrg, {}}});
  Article a;
  a.id = "1";
  a.fields[FieldTag::kBody] = "nothing here";
  EXPECT_TRUE(build_candidate_index({a}, &t).empty());
}

TEST(CandidateIndex, SyntheticSizeEqualsDistinctInstantiated) {
  const auto g = builtin_gazetteer();
  GazetteerTagger t(g);
  auto s = make_synthetic_corpus(7, 50, g);
  std::set<EntityKey> distinct;
  for (const auto& list : s.instantiated) {
    for (const auto& e : list) distinct.insert(entity_key(e));
  }
  auto idx = build_candidate_index(s.articles, &t);
  EXPECT_EQ(idx.size(), distinct.size());
  for (std::size_t i = 1; i < idx.size(); ++i) {
    const auto& a = idx.entries()[i - 1];
    const auto& b = idx.entries()[i];
    EXPECT_TRUE(a.surface < b.surface || (a.surface == b.surface && a.category < b.category));
  }
}

namespace {

CandidateIndex letters_index(std::size_t n) {
  EntityList e;
  for (std::size_t i = 0; i < n; ++i) e.push_back({"cand" + std::to_string(i), EntityCategory::kOrg, {}});
  return CandidateIndex(e);
}

}  // namespace

TEST(VisualNer, IdenticalEmbeddingRanksFirst) {
  KeyedProvider p([](EmbedKind kind, const std::string& s) {
    if (kind == EmbedKind::kImage && s == "img_A") return std::string("Alki");
    return s;
  });
  CandidateIndex idx(EntityList{{"Alki", EntityCategory::kOrg, {}}, {"Bo", EntityCategory::kPerson, {}}});
  auto top = visual_ner("img_A", idx, p, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].surface, "Alki");
  EXPECT_NEAR(*top[0].score, 1.0, 1e-6);
}

TEST(VisualNer, TopAllIsPermutation) {
  HashProvider p(32, 1);
  auto idx = letters_index(25);
  auto top = visual_ner("img", idx, p, 25);
  ASSERT_EQ(top.size(), 25u);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < top.size(); ++i) {
    seen.insert(top[i].surface);
    if (i) EXPECT_GE(*top[i - 1].score, *top[i].score);
  }
  EXPECT_EQ(seen.size(), 25u);
  EXPECT_EQ(visual_ner("img", idx, p, 100).size(), 25u);
}

TEST(VisualNer, Errors) {
  HashProvider p(8);
  EXPECT_THROW(visual_ner("img", letters_index(3), p, 0), ContractError);
  EXPECT_THROW(visual_ner("img", CandidateIndex(), p, 1), ContractError);
  auto idx = letters_index(3);
  idx.embed(HashProvider(16));
  EXPECT_THROW(visual_ner("img", idx, p, 1), ContractError);
}

TEST(VisualNer, TiesKeepIndexOrder) {
  KeyedProvider p([](EmbedKind, const std::string&) { return std::string("same"); });
  auto top = visual_ner("img", letters_index(5), p, 3);
  EXPECT_EQ(top[0].surface, "cand0");
  EXPECT_EQ(top[1].surface, "cand1");
  EXPECT_EQ(top[2].surface, "cand2");
}

// Any candidate embedded identically to the image ranks first for every k.
TEST(VisualNer, MatchingCandidateAlwaysFirstProperty) {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.index(60);
    const std::size_t star = rng.index(n);
    const std::string target = "cand" + std::to_string(star);
    KeyedProvider p([&](EmbedKind kind, const std::string& s) {
      return kind == EmbedKind::kImage ? target : s;
    }, 48, static_cast<std::uint64_t>(trial));
    auto idx = letters_index(n);
    idx.embed(p);
    for (std::size_t k = 1; k <= n; k += 1 + n / 7) {
      auto top = visual_ner("any-image", idx, p, k);
      EXPECT_EQ(top.front().surface, target);
    }
  }
}

// With unrelated random vectors the top-k is a uniformly random k-subset, so
// recall against an m-entity oracle is hypergeometric with mean k/N.
TEST(VisualNer, RandomProviderRecallMatchesHypergeometric) {
  const std::size_t N = 100, k = 10, m = 5, images = 500;
  HashProvider p(64, 99);
  auto idx = letters_index(N);
  idx.embed(p);
  Rng rng(4);
  double sum = 0;
  for (std::size_t i = 0; i < images; ++i) {
    std::vector<std::size_t> pick(N);
    for (std::size_t j = 0; j < N; ++j) pick[j] = j;
    rng.shuffle(pick);
    EntityList oracle;
    for (std::size_t j = 0; j < m; ++j) oracle.push_back(idx.entries()[pick[j]]);
    sum += ner_recall(visual_ner("image-" + std::to_string(i), idx, p, k), oracle);
  }
  const double mean = sum / images;
  const double q = static_cast<double>(k) / N;
  const double var_overlap = m * q * (1 - q) * static_cast<double>(N - m) / static_cast<double>(N - 1);
  const double sigma = std::sqrt(var_overlap / (m * m) / images);
  EXPECT_NEAR(mean, q, 3 * sigma);
}

TEST(NerRecall, SetArithmetic) {
  const Entity A{"A", EntityCategory::kOrg, {}}, B{"B", EntityCategory::kOrg, {}}, C{"C", EntityCategory::kOrg, {}};
  EXPECT_DOUBLE_EQ(ner_recall({A, B}, {A, C}), 0.5);
  EXPECT_DOUBLE_EQ(ner_recall({A, C}, {A, C}), 1.0);
  EXPECT_DOUBLE_EQ(ner_recall({B}, {A, C}), 0.0);
  EXPECT_DOUBLE_EQ(ner_recall({{"a", EntityCategory::kOrg, {}}}, {A}), 1.0);
  EXPECT_DOUBLE_EQ(ner_recall({{"A", EntityCategory::kPerson, {}}}, {A}), 0.0);
  EXPECT_THROW(ner_recall({A}, {}), ContractError);
}

TEST(NerRecall, MonotoneInNestedTopK) {
  HashProvider p(32, 3);
  auto idx = letters_index(40);
  EntityList oracle = {idx.entries()[3], idx.entries()[17], idx.entries()[29], idx.entries()[30]};
  double prev = 0;
  for (std::size_t k = 1; k <= 40; ++k) {
    const double r = ner_recall(visual_ner("img", idx, p, k), oracle);
    EXPECT_GE(r, prev);
    prev = r;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);
}

// Scene images embed near the depicted entities, so visual NER recovers
// them well above chance.
TEST(VisualNer, SceneProviderRecoversDepictedEntities) {
  const auto g = builtin_gazetteer();
  GazetteerTagger t(g);
  auto s = make_synthetic_corpus(7, 60, g);
  SceneProvider p(64, 7);
  auto idx = build_candidate_index(s.articles, &t);
  idx.embed(p);
  double sum = 0;
  for (const auto& a : s.articles) {
    const auto parts = split(a.image_refs.front(), '|');
    EntityList depicted;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      for (const auto& e : idx.entries()) {
        if (e.surface == parts[i]) depicted.push_back(e);
      }
    }
    sum += ner_recall(visual_ner(a.image_refs.front(), idx, p, 10), depicted);
  }
  EXPECT_GT(sum / static_cast<double>(s.articles.size()), 0.9);
}
