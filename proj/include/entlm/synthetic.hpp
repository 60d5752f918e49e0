#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/types.hpp"
#include "entlm/util.hpp"

namespace entlm {

using Gazetteer = std::vector<Entity>;

// Invented names only, so the built-in tagger never fires on template text.
inline Gazetteer builtin_gazetteer() {
  static constexpr std::array<std::string_view, 12> kFirst = {
      "Marta", "Ilkay",   "Doran", "Sefa",  "Anouk", "Tamsin",
      "Oriel", "Kasimir", "Lenka", "Yusra", "Bram",  "Celestine"};
  static constexpr std::array<std::string_view, 10> kLast = {
      "Okonkwo", "Valtane", "Brisco", "Harrowgate", "Quillen",
      "Mavrides", "Sundqvist", "Tollan", "Ferreira", "Ashdown"};
  static constexpr std::array<std::string_view, 30> kOrgs = {
      "Velorin Group",     "Kestrel Athletic",    "Northgate Council",
      "Ambrell Bank",      "Corvid Labs",         "Tessaly Union",
      "Brightwater Trust", "Halvard Motors",      "Sable Point Records",
      "Orison Health",     "Greyfen Club",        "Lumen Arc",
      "Marrow Foundation", "Stellan Airways",     "Pellucid Media",
      "Cinder Hall",       "Wexford Mills",       "Ostrava Partners",
      "Quarry Lane United", "Fennick Institute",  "Ravelle Opera",
      "Dunmore Capital",   "Silverbirch Alliance", "Tidewater Ports",
      "Cobalt Ridge Mining", "Hollis Academy",    "Vantor Systems",
      "Emberly Foods",     "Ardent Rail",         "Nimbus Works"};
  static constexpr std::array<std::string_view, 24> kPlaces = {
      "Port Alvane", "Draskov",  "Meridia",   "Kelloway", "Sundara",
      "Brevik",      "Ostmark",  "Valcourt",  "Tiberon",  "Lismore Bay",
      "Carrowden",   "Estravia", "Halden",    "Quintaro", "Rosslare",
      "Velmont",     "Zandria",  "Ashgrove",  "Morvane",  "Peltier",
      "Greyhaven",   "Solenne",  "Tarrow",    "Icaria"};
  static constexpr std::array<std::string_view, 16> kEvents = {
      "Harbor Cup",      "Winter Assembly",   "Lantern Festival",
      "Meridian Games",  "Founders Regatta",  "Autumn Expo",
      "Granite Open",    "Solstice Fair",     "Riverside Marathon",
      "Copperline Forum", "Spring Congress",  "Beacon Awards",
      "Northern Derby",  "Unity Summit",      "Glass Coast Biennale",
      "Ironwood Classic"};
  static constexpr std::array<std::string_view, 10> kGroups = {
      "Valtrian", "Osmeri", "Kallish", "Durnese", "Ebrani",
      "Sothic",   "Mareni", "Tolvan",  "Quessan", "Ardish"};

  Gazetteer g;
  for (auto f : kFirst) {
    for (auto l : kLast) {
      g.push_back({std::string(f) + " " + std::string(l), EntityCategory::kPerson, {}});
    }
  }
  for (auto s : kOrgs) g.push_back({std::string(s), EntityCategory::kOrg, {}});
  for (auto s : kPlaces) g.push_back({std::string(s), EntityCategory::kGpe, {}});
  for (auto s : kEvents) g.push_back({std::string(s), EntityCategory::kEvent, {}});
  for (auto s : kGroups) g.push_back({std::string(s), EntityCategory::kNorp, {}});
  return g;
}

struct SyntheticCorpus {
  std::vector<Article> articles;
  // Per article: distinct gazetteer entries placed by the generator, in
  // field-scan order (see kAllFields) then by offset.
  std::vector<EntityList> instantiated;
  // Per article: total number of entity mentions placed in the body.
  std::vector<std::size_t> body_mentions;
};

// Mean body mentions per article implied by the template table below.
inline constexpr double kSyntheticBodyMentionsPerArticle = 7.5;

namespace detail {

// Builds one field's text while logging where entities land.
class FieldWriter {
 public:
  void text(std::string_view s) { out_ += s; }
  void entity(const Entity& e) {
    mentions_.push_back({out_.size(), e});
    out_ += e.surface;
  }
  const std::string& str() const { return out_; }
  const std::vector<std::pair<std::size_t, Entity>>& mentions() const { return mentions_; }

 private:
  std::string out_;
  std::vector<std::pair<std::size_t, Entity>> mentions_;
};

// Fills "{P1}" style slots from `slots`; any other text is copied.
inline void fill(FieldWriter& w, std::string_view tmpl,
                 const std::map<std::string, Entity>& slots,
                 const std::map<std::string, std::string>& words) {
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      const std::string key(tmpl.substr(i + 1, close - i - 1));
      if (auto it = slots.find(key); it != slots.end()) {
        w.entity(it->second);
      } else {
        w.text(words.at(key));
      }
      i = close + 1;
    } else {
      const auto next = tmpl.find('{', i);
      const auto end = next == std::string_view::npos ? tmpl.size() : next;
      w.text(tmpl.substr(i, end - i));
      i = end;
    }
  }
}

}  // namespace detail

// Deterministic entity-rich news-like corpus. Bodies reuse the entities that
// appear in title/caption/summary and introduce new ones, so an entity list
// in the context is informative about the body.
inline SyntheticCorpus make_synthetic_corpus(std::uint64_t seed, std::size_t n,
                                             const Gazetteer& gazetteer) {
  if (gazetteer.empty()) throw ContractError("synthetic corpus needs a non-empty gazetteer");
  if (n == 0) throw ContractError("synthetic corpus size must be at least 1");

  std::map<EntityCategory, std::vector<const Entity*>> pools;
  for (const auto& e : gazetteer) pools[e.category].push_back(&e);
  Rng rng(splitmix64(seed ^ 0x5eedc0de5eedc0deULL));

  auto draw = [&](EntityCategory c, const Entity* avoid) -> Entity {
    const auto it = pools.find(c);
    std::vector<const Entity*> all;
    const std::vector<const Entity*>* pool = nullptr;
    if (it != pools.end()) {
      pool = &it->second;
    } else {
      for (const auto& e : gazetteer) all.push_back(&e);
      pool = &all;
    }
    const Entity* pick = (*pool)[rng.index(pool->size())];
    if (avoid && pool->size() > 1) {
      while (pick == avoid || pick->surface == avoid->surface) {
        pick = (*pool)[rng.index(pool->size())];
      }
    }
    return Entity{pick->surface, pick->category, {}};
  };

  static constexpr std::array<std::string_view, 4> kDomains = {
      "harborpost.example", "northwire.example", "dailyledger.example",
      "metrogazette.example"};
  static constexpr std::array<std::string_view, 4> kVerbs = {
      "said", "told reporters", "noted", "added"};
  static constexpr std::array<std::string_view, 4> kTopics = {
      "sports", "politics", "business", "culture"};
  static constexpr std::array<std::string_view, 4> kTopicSentence = {
      " {O1} fans from the {N1} community filled the arena.",
      " {N1} delegates from {O1} attended the session.",
      " {N1} investors welcomed the news from {O1}.",
      " {N1} artists praised {O1} for the program."};
  static constexpr std::array<std::string_view, 3> kTitles = {
      "{P1} leads {O1} into a new season", "{O1} backs {P1} in talks",
      "{P1} and {O1} reach an agreement"};
  static constexpr std::array<std::string_view, 2> kCaptions = {
      "{P1} arrives in {G1}.", "{P1} speaks to supporters in {G1}."};
  static constexpr std::array<std::string_view, 2> kSummaries = {
      "A statement from {O1} outlined the next steps.",
      "{O1} released new details on the plan."};
  static constexpr std::array<std::string_view, 2> kOpeners = {
      "{P1} met {P2} in {G1} before the {E1}.",
      "{P2} joined {P1} in {G1} ahead of the {E1}."};
  static constexpr std::array<std::string_view, 2> kQuotes = {
      " \"We are ready for this,\" {P2} {verb}.",
      " \"This is a big step for us,\" {P2} {verb}."};

  SyntheticCorpus out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t domain = rng.index(kDomains.size());
    const std::size_t topic = rng.index(kTopics.size());
    char date[16];
    std::snprintf(date, sizeof date, "%04d-%02d-%02d", 2010 + static_cast<int>(rng.index(9)),
                  1 + static_cast<int>(rng.index(12)), 1 + static_cast<int>(rng.index(28)));

    const Entity p1 = draw(EntityCategory::kPerson, nullptr);
    const Entity p2 = draw(EntityCategory::kPerson, &p1);
    std::map<std::string, Entity> slots = {
        {"P1", p1},
        {"P2", p2},
        {"O1", draw(EntityCategory::kOrg, nullptr)},
        {"G1", draw(EntityCategory::kGpe, nullptr)},
        {"E1", draw(EntityCategory::kEvent, nullptr)},
        {"N1", draw(EntityCategory::kNorp, nullptr)},
    };
    const std::map<std::string, std::string> words = {
        {"verb", std::string(kVerbs[domain])}, {"date", date}};

    std::map<FieldTag, detail::FieldWriter> writers;
    detail::fill(writers[FieldTag::kTitle], kTitles[rng.index(kTitles.size())], slots, words);
    detail::fill(writers[FieldTag::kCaption], kCaptions[rng.index(kCaptions.size())], slots, words);
    detail::fill(writers[FieldTag::kSummary], kSummaries[rng.index(kSummaries.size())], slots, words);
    auto& body = writers[FieldTag::kBody];
    detail::fill(body, kOpeners[rng.index(kOpeners.size())], slots, words);
    if (rng.index(2) == 1) detail::fill(body, kQuotes[rng.index(kQuotes.size())], slots, words);
    detail::fill(body, kTopicSentence[topic], slots, words);
    detail::fill(body, " The {E1} is scheduled to end on {date}.", slots, words);

    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", i);
    Article a;
    a.id = id;
    a.fields[FieldTag::kDomain] = std::string(kDomains[domain]);
    a.fields[FieldTag::kDate] = date;
    a.fields[FieldTag::kTopic] = std::string(kTopics[topic]);
    for (auto& [tag, w] : writers) a.fields[tag] = w.str();
    a.image_refs.push_back("scene:" + a.id + "|" + slots["P1"].surface + "|" +
                           slots["P2"].surface + "|" + slots["G1"].surface);

    EntityList log;
    std::set<EntityKey> seen;
    for (FieldTag t : kAllFields) {
      auto it = writers.find(t);
      if (it == writers.end()) continue;
      for (const auto& [off, e] : it->second.mentions()) {
        if (seen.insert(entity_key(e)).second) log.push_back(e);
      }
    }
    out.body_mentions.push_back(body.mentions().size());
    out.instantiated.push_back(std::move(log));
    out.articles.push_back(std::move(a));
  }
  return out;
}

}  // namespace entlm
