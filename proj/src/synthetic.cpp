#include "faithtag/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <random>
#include <string>

namespace faithtag {

namespace {

constexpr std::array kNames = {"anna",  "ben",   "clara", "david", "emma", "frank", "grace",
                               "henry", "iris",  "jack",  "kate",  "liam", "maria", "noah"};
constexpr std::array kOtherNames = {"oscar", "paula", "quinn", "rosa", "victor", "wendy", "yusuf", "zoe"};
constexpr std::array kObjects = {"book",  "laptop", "umbrella", "charger", "guitar",
                                 "camera", "bike",  "ladder",   "drill",   "tent"};
constexpr std::array kOtherObjects = {"kettle", "scarf", "printer", "helmet", "blender", "mirror"};
constexpr std::array kPlaces = {"library", "station", "office", "cafe", "park", "gym", "school", "market"};
constexpr std::array kOtherPlaces = {"airport", "museum", "harbor", "stadium", "bakery"};
constexpr std::array kTimes = {"monday", "tuesday", "wednesday", "thursday"};
constexpr std::array kOtherTimes = {"friday", "saturday", "sunday"};

constexpr std::array kOpeners = {"hey", "hi", "hello"};
constexpr std::array kFillers = {"no problem , happy to help .", "sure thing .", "of course , anytime ."};

using Rng = std::mt19937_64;

template <std::size_t N>
std::string pick(Rng& rng, const std::array<const char*, N>& pool) {
  return pool[rng() % N];
}

enum class Rule { Name, Object, PlaceOrTime, Tense, Drop };
constexpr std::array kRules = {Rule::Name, Rule::Object, Rule::PlaceOrTime, Rule::Tense, Rule::Drop};

struct Facts {
  std::string asker, lender, object, place, time;
};

Dialogue make_dialogue(const std::string& id, const Facts& f, Rng& rng) {
  Dialogue d;
  d.id = id;
  d.turns.push_back({f.asker, pick(rng, kOpeners) + " " + f.lender + " , could you lend me your " + f.object + " ?"});
  d.turns.push_back({f.lender, "sure , when do you need it ?"});
  d.turns.push_back({f.asker, "on " + f.time + " . i will be at the " + f.place + " ."});
  d.turns.push_back({f.lender, "ok , i will bring the " + f.object + " to the " + f.place + " on " + f.time + " ."});
  d.turns.push_back({f.asker, "thanks " + f.lender + " !"});
  if (rng() % 2) d.turns.push_back({f.lender, pick(rng, kFillers)});
  return d;
}

std::vector<std::string> faithful_tokens(const Facts& f) {
  return {f.lender, "will", "bring", "the", f.object, "to", f.asker, "at", "the", f.place, "on", f.time, "."};
}

TaggedSummary corrupt(const Facts& f, Rng& rng, int count) {
  std::vector<Rule> rules(kRules.begin(), kRules.end());
  for (std::size_t i = rules.size(); i > 1; --i) std::swap(rules[i - 1], rules[rng() % i]);
  rules.resize(static_cast<std::size_t>(count));
  const bool drop = std::find(rules.begin(), rules.end(), Rule::Drop) != rules.end();

  auto tokens = faithful_tokens(f);
  std::vector<Tag> tags(tokens.size(), Tag::O);
  for (Rule r : rules) {
    switch (r) {
      case Rule::Name: {
        const std::size_t pos = rng() % 2 ? 0 : 6;
        tokens[pos] = pick(rng, kOtherNames);
        tags[pos] = Tag::W;
        break;
      }
      case Rule::Object:
        tokens[4] = pick(rng, kOtherObjects);
        tags[4] = Tag::OB;
        break;
      case Rule::PlaceOrTime:
        // The time is gone when the clause is dropped, so alter the place.
        if (drop || rng() % 2) {
          tokens[9] = pick(rng, kOtherPlaces);
          tags[9] = Tag::C;
        } else {
          tokens[11] = pick(rng, kOtherTimes);
          tags[11] = Tag::C;
        }
        break;
      case Rule::Tense:
        tokens[1] = "had";
        tokens[2] = "brought";
        tags[1] = tags[2] = Tag::N;
        break;
      case Rule::Drop:
        break;
    }
  }
  if (drop) {
    tokens.erase(tokens.begin() + 10, tokens.begin() + 12);
    tags.erase(tags.begin() + 10, tags.begin() + 12);
  }
  TaggedSummary s = make_summary(std::move(tokens), std::move(tags), drop ? Tag::M : Tag::O);
  s.source_model = "synthetic";
  return s;
}

}  // namespace

std::vector<DialogueExample> generate_synthetic(const SyntheticConfig& config) {
  if (config.dialogues <= 0 || config.summaries_per_dialogue <= 0) {
    throw EmptyDataset("synthetic corpus needs at least one dialogue and summary");
  }
  if (config.min_corruptions < 0 || config.max_corruptions < config.min_corruptions ||
      config.max_corruptions > static_cast<int>(kRules.size())) {
    throw BadRatio("corruption counts must satisfy 0 <= min <= max <= 5");
  }
  Rng rng(config.seed);
  std::vector<DialogueExample> out;
  for (int d = 0; d < config.dialogues; ++d) {
    Facts f;
    f.asker = pick(rng, kNames);
    do {
      f.lender = pick(rng, kNames);
    } while (f.lender == f.asker);
    f.object = pick(rng, kObjects);
    f.place = pick(rng, kPlaces);
    f.time = pick(rng, kTimes);

    char id[32];
    std::snprintf(id, sizeof id, "synth-%04d", d + 1);
    const Dialogue dialogue = make_dialogue(id, f, rng);
    const auto gold = faithful_tokens(f);
    const auto span = static_cast<std::uint64_t>(config.max_corruptions - config.min_corruptions + 1);
    for (int s = 0; s < config.summaries_per_dialogue; ++s) {
      const int count = config.min_corruptions + static_cast<int>(rng() % span);
      out.push_back({dialogue, corrupt(f, rng, count), gold});
    }
  }
  return out;
}

}  // namespace faithtag
