#include <random>

#include "doctest.h"
#include "faithtag/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace faithtag;
using namespace faithtag::metrics;

namespace {

std::vector<std::string> tag_names() {
  std::vector<std::string> names;
  for (Tag t : kAllTags) names.emplace_back(tag_code(t));
  return names;
}

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int labels) {
  std::vector<int> out(n);
  for (auto& v : out) v = static_cast<int>(rng() % labels);
  return out;
}

std::vector<std::string> random_words(std::mt19937_64& rng, std::size_t n, std::size_t pool) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("t" + std::to_string(rng() % pool));
  return out;
}

}  // namespace

TEST_CASE("spanize finds maximal runs") {
  const std::vector<int> labels = {0, 1, 1, 2, 2, 0, 1, 0, 3};
  const auto spans = spanize(labels);
  REQUIRE(spans.size() == 4);
  CHECK(spans[0] == TagSpan{1, 1, 3});
  CHECK(spans[1] == TagSpan{2, 3, 5});
  CHECK(spans[2] == TagSpan{1, 6, 7});
  CHECK(spans[3] == TagSpan{3, 8, 9});
  CHECK(spanize(std::vector<int>{}).empty());
  CHECK(spanize(std::vector<int>{0, 0}).empty());
}

TEST_CASE("span_prf worked example") {
  // gold spans: W[0,1) OB[5,6); pred spans: W[0,1) OB[4,6)
  const std::vector<std::vector<int>> gold = {{1, 0, 0, 0, 0, 2, 0, 5}};
  const std::vector<std::vector<int>> pred = {{1, 0, 0, 0, 2, 2, 0, 0}};
  const auto r = span_prf(gold, pred, tag_names());
  CHECK(r.true_positives == 1);
  CHECK(r.predicted_spans == 2);
  CHECK(r.gold_spans == 3);
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(1.0 / 3));
  CHECK(r.f1 == doctest::Approx(0.4));
  CHECK(r.accuracy == doctest::Approx(6.0 / 8));
  CHECK(r.per_label.at("W").f1 == doctest::Approx(1.0));
  CHECK(r.per_label.at("OB").f1 == doctest::Approx(0.0));
  CHECK(r.confusion(2, 2) == 1);
  CHECK(r.confusion(0, 2) == 1);
  CHECK(r.confusion(5, 0) == 1);
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("all-O input is degenerate and scores zero") {
  const auto r = span_prf({{0, 0, 0}}, {{0, 0, 0}}, tag_names());
  CHECK(r.degenerate);
  CHECK(r.f1 == 0.0);
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("span_prf rejects ragged input") {
  CHECK_THROWS_AS(span_prf({{0, 1}}, {{0}}, tag_names()), LengthMismatch);
  CHECK_THROWS_AS(span_prf({{0}}, {{0}, {1}}, tag_names()), LengthMismatch);
  CHECK_THROWS_AS(span_prf({{0}}, {{9}}, tag_names()), OutOfRangeTagId);
}

TEST_CASE("span metrics agree with the brute-force enumerator") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t sequences = 1 + rng() % 4;
    std::vector<std::vector<int>> gold, pred;
    for (std::size_t s = 0; s < sequences; ++s) {
      const std::size_t n = 1 + rng() % 20;
      gold.push_back(random_labels(rng, n, 6));
      pred.push_back(random_labels(rng, n, 6));
    }
    const auto r = span_prf(gold, pred, tag_names());
    const auto o = oracle::span_scores(gold, pred);
    CHECK(r.true_positives == o.tp);
    CHECK(r.predicted_spans == o.pred);
    CHECK(r.gold_spans == o.gold);
    CHECK(r.precision == o.precision);
    CHECK(r.recall == o.recall);
    CHECK(r.f1 == o.f1);
    CHECK(r.accuracy == o.accuracy);
    for (const auto& [label, q] : o.per_label) {
      const auto& mine = r.per_label.at(tag_names()[label]);
      CHECK(mine.precision == q.precision);
      CHECK(mine.recall == q.recall);
      CHECK(mine.f1 == q.f);
    }
  }
}

TEST_CASE("binary_prf scores label 1 only") {
  const auto r = binary_prf({{1, 1, 0, 1}}, {{1, 1, 0, 0}});
  CHECK(r.gold_spans == 2);
  CHECK(r.predicted_spans == 1);
  CHECK(r.true_positives == 1);
  CHECK(r.per_label.size() == 1);
  CHECK_THROWS_AS(binary_prf({{2}}, {{0}}), OutOfRangeTagId);
}

TEST_CASE("tag_prf equals span_prf over base ids") {
  std::mt19937_64 rng(4);
  std::vector<std::vector<Tag>> gold, pred;
  std::vector<std::vector<int>> gi, pi;
  for (int s = 0; s < 30; ++s) {
    const auto g = fixtures::random_tags(rng, 1 + rng() % 10);
    const auto p = fixtures::random_tags(rng, g.size() - 1);
    gold.push_back(g);
    pred.push_back(p);
    gi.emplace_back();
    pi.emplace_back();
    for (Tag t : g) gi.back().push_back(base_id(t));
    for (Tag t : p) pi.back().push_back(base_id(t));
  }
  const auto a = tag_prf(gold, pred);
  const auto b = span_prf(gi, pi, tag_names());
  CHECK(a.f1 == b.f1);
  CHECK(a.accuracy == b.accuracy);
}

TEST_CASE("harmonic_mean") {
  CHECK(harmonic_mean(0, 0) == 0.0);
  CHECK(harmonic_mean(1, 1) == 1.0);
  CHECK(harmonic_mean(0.5, 0.25) == doctest::Approx(1.0 / 3));
}

TEST_CASE("ROUGE worked example") {
  const std::vector<std::string> ref = {"the", "cat", "sat", "on", "the", "mat"};
  const std::vector<std::string> cand = {"the", "cat", "lay", "on", "a", "mat"};
  CHECK(rouge_n(cand, ref, 1).fmeasure == doctest::Approx(4.0 / 6));
  CHECK(rouge_n(cand, ref, 2).precision == doctest::Approx(1.0 / 5));
  CHECK(rouge_l(cand, ref).recall == doctest::Approx(4.0 / 6));
  CHECK(rouge_n({}, ref, 1).fmeasure == 0.0);
  CHECK(rouge_l(cand, {}).fmeasure == 0.0);
}

TEST_CASE("ROUGE lowercases by default") {
  CHECK(rouge_n({"The"}, {"the"}, 1).fmeasure == 1.0);
  CHECK(rouge_n({"The"}, {"the"}, 1, RougeOptions{false}).fmeasure == 0.0);
}

TEST_CASE("text-level ROUGE drops punctuation and splits sentences") {
  CHECK(rouge_tokens("Mark lied. He's 40!") == std::vector<std::string>{"Mark", "lied", "He's", "40"});
  const auto sents = rouge_sentences("Mark lied to Anne. He's 40 now.\nok");
  REQUIRE(sents.size() == 3);
  CHECK(sents[1] == std::vector<std::string>{"He's", "40", "now"});
  CHECK(rouge_lsum("a b. c d.", "a b. c d.").fmeasure == doctest::Approx(1.0));
}

TEST_CASE("lcs_indices picks the rouge-score backtrace") {
  const std::vector<std::string> ref = {"a", "b", "a"};
  const std::vector<std::string> cand = {"a"};
  CHECK(lcs_indices(ref, cand) == std::vector<std::size_t>{2});
  const auto o = oracle::lcs_reference_indices(ref, cand);
  CHECK(std::vector<std::size_t>(o.begin(), o.end()) == lcs_indices(ref, cand));
}

TEST_CASE("ROUGE agrees with the naive oracles") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto cand = random_words(rng, rng() % 12, 6);
    const auto ref = random_words(rng, rng() % 12, 6);
    for (int n : {1, 2}) {
      const auto a = rouge_n(cand, ref, n);
      const auto b = oracle::rouge_n(cand, ref, n);
      CHECK(a.precision == doctest::Approx(b.precision).epsilon(1e-12));
      CHECK(a.recall == doctest::Approx(b.recall).epsilon(1e-12));
      CHECK(a.fmeasure == doctest::Approx(b.f).epsilon(1e-12));
    }
    const auto l = rouge_l(cand, ref);
    const auto lo = oracle::rouge_l(cand, ref);
    CHECK(l.fmeasure == doctest::Approx(lo.f).epsilon(1e-12));

    std::vector<std::vector<std::string>> cs, rs;
    for (std::size_t k = 0, m = 1 + rng() % 3; k < m; ++k) cs.push_back(random_words(rng, 1 + rng() % 6, 5));
    for (std::size_t k = 0, m = 1 + rng() % 3; k < m; ++k) rs.push_back(random_words(rng, 1 + rng() % 6, 5));
    const auto s = rouge_lsum(cs, rs);
    const auto so = oracle::rouge_lsum(cs, rs);
    CHECK(s.precision == doctest::Approx(so.precision).epsilon(1e-12));
    CHECK(s.recall == doctest::Approx(so.recall).epsilon(1e-12));
  }
}

TEST_CASE("corpus_rouge averages per-pair scores") {
  const auto scores = corpus_rouge({{"a b c", "a b c"}, {"x", "a b c"}});
  CHECK(scores.at("rouge1").fmeasure == doctest::Approx(0.5));
  CHECK(scores.at("rougeL").fmeasure == doctest::Approx(0.5));
  CHECK(scores.count("rouge2") == 1);
  CHECK(scores.count("rougeLsum") == 1);
}
