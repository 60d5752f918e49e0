#include <gtest/gtest.h>

#include "entlm/ner.hpp"
#include "entlm/serializer.hpp"
#include "generators.hpp"

using namespace entlm;

namespace {

Article sample_article() {
  Article a;
  a.id = "s1";
  a.fields[FieldTag::kDomain] = "example.com";
  a.fields[FieldTag::kTitle] = "Alki wins";
  a.fields[FieldTag::kBody] = "Alki beat Bo in Rome.";
  return a;
}

}  // namespace

TEST(Annotate, InsertsAfterMention) {
  std::vector<EntitySpan> spans = {{FieldTag::kBody, 0, 4, "Alki", EntityCategory::kOrg},
                                   {FieldTag::kBody, 16, 20, "Rome", EntityCategory::kGpe}};
  EXPECT_EQ(annotate("Alki beat Bo in Rome.", spans), "Alki <|ORG|> beat Bo in Rome <|GPE|>.");
}

TEST(Annotate, RejectsBadSpans) {
  EXPECT_THROW(annotate("abc", {{FieldTag::kBody, 1, 9, "x", EntityCategory::kOrg}}), ContractError);
  EXPECT_THROW(annotate("abcdef", {{FieldTag::kBody, 0, 3, "abc", EntityCategory::kOrg},
                                   {FieldTag::kBody, 2, 5, "cde", EntityCategory::kOrg}}),
               ContractError);
}

TEST(Annotate, StripInvertsAnnotateProperty) {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    auto g = gen::gazetteer(rng, 1 + rng.index(8));
    GazetteerTagger t(g);
    const std::string text = rng.index(4) ? gen::mention_text(rng, g, rng.index(25)) : gen::plain_text(rng, 20);
    const auto annotated = annotate(text, t.tag(text, FieldTag::kBody));
    EXPECT_EQ(strip_annotations(annotated), text);
    EXPECT_GE(annotated.size(), text.size());
  }
}

TEST(Annotate, StripLeavesUnknownBracketsAlone) {
  EXPECT_EQ(strip_annotations("a <|FOO|> b <|ORG|>"), "a <|FOO|> b");
  EXPECT_EQ(strip_annotations("a<|ORG|>"), "a<|ORG|>");
}

TEST(EntityField, RenderAndParse) {
  EntityList e = {{"Alki", EntityCategory::kOrg, {}}, {"New Bo", EntityCategory::kPerson, {}}};
  const auto s = render_entity_field(e);
  EXPECT_EQ(s, "Alki <|ORG|>; New Bo <|PERSON|>");
  EXPECT_EQ(parse_entity_field(s), e);
  EXPECT_TRUE(parse_entity_field("").empty());
  EXPECT_THROW(parse_entity_field("Alki"), ParseError);
  EXPECT_THROW(parse_entity_field("Alki <|ORG|> x"), ParseError);
}

TEST(EntityField, RoundTripProperty) {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    auto g = gen::gazetteer(rng, rng.index(12));
    EXPECT_EQ(parse_entity_field(render_entity_field(g)), g);
  }
}

TEST(Serialize, ExactLayout) {
  const auto a = sample_article();
  EntityList e = {{"Alki", EntityCategory::kOrg, {}}};
  EXPECT_EQ(serialize(a, canonical_order("goodnews"), e),
            "<start-domain> example.com <end-domain> <start-entity> Alki <|ORG|> <end-entity> "
            "<start-title> Alki wins <end-title> <start-body> Alki beat Bo in Rome. <end-body>");
}

TEST(Serialize, EmptyEntityListOmitsField) {
  const auto s = serialize(sample_article(), canonical_order("goodnews"), {});
  EXPECT_EQ(s.find("<start-entity>"), std::string::npos);
}

TEST(Serialize, ScopeControlsAnnotation) {
  const auto a = sample_article();
  GazetteerTagger t({{"Alki", EntityCategory::kOrg, {}}});
  const auto spans = group_spans(article_spans(a, &t));
  const auto order = canonical_order("title,body");
  EXPECT_EQ(serialize(a, order, {}, spans, AnnotationScope::kNone),
            "<start-title> Alki wins <end-title> <start-body> Alki beat Bo in Rome. <end-body>");
  EXPECT_EQ(serialize(a, order, {}, spans, AnnotationScope::kBody),
            "<start-title> Alki wins <end-title> <start-body> Alki <|ORG|> beat Bo in Rome. <end-body>");
  EXPECT_EQ(serialize(a, order, {}, spans, AnnotationScope::kNarrative),
            "<start-title> Alki <|ORG|> wins <end-title> <start-body> Alki <|ORG|> beat Bo in Rome. <end-body>");
}

TEST(Serialize, BodyContext) {
  const auto s = serialize(sample_article(), canonical_order("goodnews"), {});
  EXPECT_EQ(body_context(s), "<start-domain> example.com <end-domain> <start-title> Alki wins <end-title> <start-body>");
  EXPECT_THROW(body_context("<start-title> x <end-title>"), ContractError);
}

TEST(Serialize, ParseInvertsSerializeProperty) {
  Rng rng(13);
  const auto order = canonical_order("goodnews");
  for (int trial = 0; trial < 300; ++trial) {
    auto g = gen::gazetteer(rng, 1 + rng.index(6));
    GazetteerTagger t(g);
    const auto a = gen::article(rng, g, "p" + std::to_string(trial));
    const auto scope = static_cast<AnnotationScope>(rng.index(3));
    const auto ents = oracle_entities(a, &t);
    const auto doc = serialize_document(a, order, ents, group_spans(article_spans(a, &t)), scope);
    const auto parsed = parse_generated(doc.serialized);
    EXPECT_FALSE(parsed.truncated);
    EXPECT_EQ(parsed.fields, doc.fields);
    for (const auto& [tag, text] : doc.fields) {
      if (tag == FieldTag::kNamedEntity) {
        EXPECT_EQ(parse_entity_field(text), ents);
      } else {
        EXPECT_EQ(strip_annotations(text), a.text(tag));
      }
    }
  }
}

TEST(ParseGenerated, TruncatedAndMalformed) {
  auto p = parse_generated("<start-title> a <end-title> <start-body> half a sent");
  EXPECT_EQ(p.fields.at(FieldTag::kTitle), "a");
  EXPECT_EQ(p.fields.at(FieldTag::kBody), "half a sent");
  EXPECT_EQ(p.truncated, FieldTag::kBody);
  EXPECT_THROW(parse_generated("<start-title> a <start-body> b"), ParseError);
  EXPECT_THROW(parse_generated("<start-title> a <end-body>"), ParseError);
  EXPECT_THROW(parse_generated("<start-title> a <end-title> <start-title> b <end-title>"), ParseError);
}
