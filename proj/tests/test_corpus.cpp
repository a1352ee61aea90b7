#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "faithtag/corpus.hpp"
#include "faithtag/synthetic.hpp"
#include "fixtures.hpp"

using namespace faithtag;

TEST_CASE("tag codes round-trip and reject unknown codes") {
  for (Tag t : kAllTags) {
    CHECK(parse_tag_code(tag_code(t)) == t);
    CHECK(tag_from_base_id(base_id(t)) == t);
  }
  CHECK_FALSE(parse_tag_code("X").has_value());
  CHECK_FALSE(parse_tag_code("o").has_value());
  CHECK_THROWS_AS(tag_from_base_id(6), OutOfRangeTagId);
  CHECK_THROWS_AS(tag_from_base_id(-1), OutOfRangeTagId);
}

TEST_CASE("summary invariants") {
  auto ok = fixtures::mary_carter_example().summary;
  CHECK(summary_problems(ok).empty());
  CHECK_NOTHROW(validate_summary(ok));

  SUBCASE("M on an interior token") {
    auto s = ok;
    s.tags[2] = Tag::M;
    auto p = summary_problems(s);
    REQUIRE(p.size() == 1);
    CHECK(p[0].position == 2);
    CHECK_THROWS_AS(validate_summary(s), InvalidSummary);
  }
  SUBCASE("tag count differs") {
    auto s = ok;
    s.tags.pop_back();
    CHECK_FALSE(summary_problems(s).empty());
  }
  SUBCASE("missing slot") {
    auto s = ok;
    s.tokens.back() = "x";
    CHECK_FALSE(summary_problems(s).empty());
  }
  SUBCASE("slot before the end") {
    auto s = ok;
    s.tokens[1] = std::string(kEosToken);
    CHECK_FALSE(summary_problems(s).empty());
  }
  SUBCASE("empty") { CHECK_FALSE(summary_problems(TaggedSummary{}).empty()); }
}

TEST_CASE("tokenize splits trailing sentence punctuation") {
  CHECK(tokenize("Adam will lend Mary a box.") ==
        std::vector<std::string>{"Adam", "will", "lend", "Mary", "a", "box", "."});
  CHECK(tokenize("  what?!  ok, fine ") == std::vector<std::string>{"what", "?", "!", "ok", ",", "fine"});
  CHECK(tokenize("He's 40").size() == 2);
  CHECK(tokenize("").empty());
}

TEST_CASE("flatten_dialogue and dialogue_text") {
  const auto d = fixtures::mary_carter_dialogue();
  const auto flat = flatten_dialogue(d);
  CHECK(flat[0] == "Mary");
  CHECK(flat[1] == ":");
  CHECK(dialogue_text(d).find("Carter: okay") != std::string::npos);
}

TEST_CASE("inline tagged text") {
  const std::string text = "Adam(W) will(O) lend(O) Mary(O) a(O) box(OB) .(O)";
  const auto parsed = parse_inline_tagged(text);
  CHECK(parsed.tokens.size() == 7);
  CHECK(parsed.tags[0] == Tag::W);
  CHECK(parsed.tags[5] == Tag::OB);
  CHECK(render_inline_tagged(parsed.tokens, parsed.tags) == text);

  CHECK(parse_inline_tagged("f(x)(C)").tokens[0] == "f(x)");
  CHECK_THROWS_AS(parse_inline_tagged("Adam"), MalformedInlineTag);
  CHECK_THROWS_AS(parse_inline_tagged("Adam(Q)"), MalformedInlineTag);
  CHECK_THROWS_AS(parse_inline_tagged("(O)"), MalformedInlineTag);
  CHECK_THROWS_AS(render_inline_tagged({"a"}, {}), LengthMismatch);
  CHECK_THROWS_AS(render_inline_tagged({"a b"}, {Tag::O}), MalformedInlineTag);
}

TEST_CASE("render and parse are inverse on random input") {
  std::mt19937_64 rng(5);
  const auto words = fixtures::word_pool(9, "tok");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> tokens;
    std::vector<Tag> tags;
    const std::size_t n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      tokens.push_back(words[rng() % words.size()] + (rng() % 3 == 0 ? "(x)" : ""));
      tags.push_back(kAllTags[rng() % kNumTags]);
    }
    const auto back = parse_inline_tagged(render_inline_tagged(tokens, tags));
    CHECK(back.tokens == tokens);
    CHECK(back.tags == tags);
  }
}

TEST_CASE("binarize_tags") {
  CHECK(binarize_tags({Tag::O, Tag::W, Tag::OB, Tag::C, Tag::N, Tag::M}) == std::vector<int>{0, 1, 1, 1, 1, 1});
}

TEST_CASE("JSONL round-trip preserves every field") {
  std::mt19937_64 rng(11);
  auto examples = fixtures::random_examples(rng, 20);
  examples.push_back(fixtures::mary_carter_example());
  std::stringstream ss;
  write_dataset(ss, examples);
  const auto back = read_dataset(ss);
  CHECK(back.examples == examples);
  CHECK_FALSE(back.split_assignment.has_value());

  fixtures::TempDir dir;
  save_dataset(examples, dir / "c.jsonl");
  CHECK(load_dataset(dir / "c.jsonl").examples == examples);
  CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl"), IoError);
}

TEST_CASE("schema errors carry the line number") {
  const std::string good = example_to_jsonl(fixtures::mary_carter_example());
  auto line_of = [](const std::string& text) {
    std::stringstream ss(text);
    try {
      read_dataset(ss);
    } catch (const SchemaError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of(good + "\n{not json\n") == 2);
  CHECK(line_of(good + "\n" + good + "\n{\"dialogue_id\": \"x\"}\n") == 3);

  std::string bad_tag = good;
  bad_tag.replace(bad_tag.find("\"OB\""), 4, "\"ZZ\"");
  CHECK(line_of(bad_tag) == 1);

  std::string interior_m = good;
  interior_m.replace(interior_m.find("\"OB\""), 4, "\"M\"");
  CHECK(line_of(interior_m) == 1);
}

TEST_CASE("split sizes use largest remainders") {
  CHECK(split_sizes(100, {}) == std::array<std::size_t, 3>{76, 12, 12});
  CHECK(split_sizes(10, {}) == std::array<std::size_t, 3>{8, 1, 1});
  CHECK(split_sizes(1, {}) == std::array<std::size_t, 3>{1, 0, 0});
  for (std::size_t n = 0; n < 300; ++n) {
    const auto s = split_sizes(n, {});
    CHECK(s[0] + s[1] + s[2] == n);
    CHECK(std::abs(static_cast<double>(s[0]) - 0.76 * n) < 1.0);
    CHECK(std::abs(static_cast<double>(s[1]) - 0.12 * n) < 1.0);
  }
  CHECK_THROWS_AS(split_sizes(10, {50, 50, 0}), BadRatio);
  CHECK_THROWS_AS(split_sizes(10, {50, 30, 30}), BadRatio);
}

TEST_CASE("split_by_dialogue keeps dialogues whole and is seeded") {
  std::mt19937_64 rng(3);
  Dataset ds{fixtures::random_examples(rng, 40), std::nullopt};
  const auto a = split_by_dialogue(ds, {}, 7);
  const auto b = split_by_dialogue(ds, {}, 7);
  const auto c = split_by_dialogue(ds, {}, 8);
  REQUIRE(a.split_assignment);
  CHECK(*a.split_assignment == *b.split_assignment);
  CHECK(*a.split_assignment != *c.split_assignment);
  std::size_t total = 0;
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    for (const auto& ex : a.subset(s)) {
      CHECK(a.split_assignment->at(ex.dialogue.id) == s);
      ++total;
    }
  }
  CHECK(total == ds.examples.size());
  CHECK_THROWS_AS(ds.subset(Split::Train), BadRatio);
  CHECK_THROWS_AS(split_by_dialogue(Dataset{}, {}, 1), EmptyDataset);
}

TEST_CASE("tag_stats counts every tag") {
  const auto stats = tag_stats(std::vector<DialogueExample>{fixtures::mary_carter_example()});
  CHECK(stats.at(Tag::O).count == 5);
  CHECK(stats.at(Tag::W).count == 1);
  CHECK(stats.at(Tag::M).count == 1);
  CHECK(stats.at(Tag::C).count == 0);
  CHECK(stats.at(Tag::O).fraction == doctest::Approx(5.0 / 8.0));
}

TEST_CASE("synthetic corpus follows its corruption rules") {
  const auto examples = generate_synthetic();
  CHECK(examples.size() == 200);
  std::set<std::string> ids;
  for (const auto& ex : examples) {
    ids.insert(ex.dialogue.id);
    CHECK_NOTHROW(validate_example(ex));
    REQUIRE(ex.gold_summary);
    const auto& toks = ex.summary.tokens;
    const auto& gold = *ex.gold_summary;
    bool any = false;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) any = any || ex.summary.tags[i] != Tag::O;
    any = any || ex.summary.tags.back() == Tag::M;
    CHECK(any);
    if (ex.summary.tags.back() == Tag::M) {
      CHECK(toks.size() == gold.size() - 1);  // "on <time>" dropped
    } else {
      REQUIRE(toks.size() == gold.size() + 1);
      for (std::size_t i = 0; i < gold.size(); ++i) {
        // Changed tokens are exactly the tagged ones.
        CHECK((toks[i] != gold[i]) == (ex.summary.tags[i] != Tag::O));
      }
    }
  }
  CHECK(ids.size() == 100);
  CHECK(generate_synthetic() == examples);
  SyntheticConfig other;
  other.seed = 43;
  CHECK(generate_synthetic(other) != examples);
}
