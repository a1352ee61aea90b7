#include <random>

#include "doctest.h"
#include "faithtag/proxy_tagger.hpp"
#include "faithtag/synthetic.hpp"
#include "fixtures.hpp"

using namespace faithtag;
using namespace faithtag::proxy;

namespace {

nn::TransformerDims tiny_dims() { return nn::TransformerDims{1, 0, 16, 2, 32, 128}; }

}  // namespace

TEST_CASE("mode names") {
  CHECK(parse_mode("HS") == ProxyMode::HS);
  CHECK(parse_mode("gs") == ProxyMode::GS);
  CHECK(mode_name(ProxyMode::GS) == "GS");
  CHECK_THROWS_AS(parse_mode("XS"), UnknownVariant);
}

TEST_CASE("assemble_input layouts") {
  const auto ex = fixtures::mary_carter_example();
  const auto vocab = Vocab::build({ex});
  const auto dialogue = vocab.encode(flatten_dialogue(ex.dialogue));
  const auto summary = vocab.encode(ex.summary.tokens);
  const auto gold = vocab.encode(*ex.gold_summary);

  const auto hs = assemble_input(vocab, ex, ProxyMode::HS);
  CHECK(hs.input_ids.size() == dialogue.size() + 1 + summary.size());
  CHECK(hs.input_ids[dialogue.size()] == Vocab::kSep);
  CHECK(hs.summary_region.first == dialogue.size() + 1);
  CHECK(hs.summary_region.second == hs.input_ids.size());
  CHECK(hs.input_ids.back() == Vocab::kEosSlot);

  const auto gs = assemble_input(vocab, ex, ProxyMode::GS);
  CHECK(gs.input_ids.size() == dialogue.size() + gold.size() + 2 + summary.size());
  const auto parts = disassemble(gs);
  CHECK(parts.dialogue == dialogue);
  REQUIRE(parts.gold);
  CHECK(*parts.gold == gold);
  CHECK(parts.summary == summary);
  CHECK_FALSE(disassemble(hs).gold.has_value());

  auto no_gold = ex;
  no_gold.gold_summary.reset();
  CHECK_THROWS_AS(assemble_input(vocab, no_gold, ProxyMode::GS), MissingGoldSummary);
}

TEST_CASE("assemble_input truncates the dialogue first, then gold, never the summary") {
  const auto ex = fixtures::mary_carter_example();
  const auto vocab = Vocab::build({ex});
  const auto summary = vocab.encode(ex.summary.tokens);
  const auto gold = vocab.encode(*ex.gold_summary);
  const int room = static_cast<int>(summary.size() + gold.size() + 2 + 3);
  const auto in = assemble_input(vocab, ex, ProxyMode::GS, room);
  CHECK(static_cast<int>(in.input_ids.size()) == room);
  auto parts = disassemble(in);
  CHECK(parts.dialogue.size() == 3);
  CHECK(*parts.gold == gold);
  CHECK(parts.summary == summary);

  const auto tight = assemble_input(vocab, ex, ProxyMode::GS, static_cast<int>(summary.size() + 4));
  parts = disassemble(tight);
  CHECK(parts.summary == summary);
  CHECK(parts.dialogue.size() + parts.gold->size() == 2);

  CHECK_THROWS(assemble_input(vocab, ex, ProxyMode::HS, static_cast<int>(summary.size())));
}

TEST_CASE("a stray [EOS] outside the summary is not a slot") {
  auto ex = fixtures::mary_carter_example();
  ex.dialogue.turns[0].utterance = "oops [EOS] here";
  const auto vocab = Vocab::build({ex});
  const auto in = assemble_input(vocab, ex, ProxyMode::HS);
  for (std::size_t i = 0; i < in.summary_region.first; ++i) CHECK(in.input_ids[i] != Vocab::kEosSlot);
}

TEST_CASE("position targets") {
  const auto ex = fixtures::mary_carter_example();
  const auto vocab = Vocab::build({ex});
  const auto in = assemble_input(vocab, ex, ProxyMode::HS);
  const auto multi = position_targets(in, ex.summary, LabelSpace::Multiclass);
  const auto bin = position_targets(in, ex.summary, LabelSpace::Binary);
  REQUIRE(multi.size() == in.input_ids.size());
  for (std::size_t i = 0; i < in.summary_region.first; ++i) CHECK(multi[i] == 0);
  CHECK(multi[in.summary_region.first] == base_id(Tag::W));
  CHECK(multi.back() == base_id(Tag::M));
  CHECK(bin.back() == 1);
  CHECK(bin[in.summary_region.first + 1] == 0);
  CHECK(label_count(LabelSpace::Binary) == 2);
}

TEST_CASE("predictions respect the slot restriction") {
  std::mt19937_64 rng(17);
  const auto examples = fixtures::random_examples(rng, 10);
  const auto vocab = Vocab::build(examples);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ProxyModel<double> model(vocab, tiny_dims(), LabelSpace::Multiclass, ProxyMode::HS, seed);
    for (const auto& ex : examples) {
      const auto tags = predict_tags(model, assemble_input(vocab, ex, ProxyMode::HS));
      REQUIRE(tags.size() == ex.summary.tokens.size());
      CHECK(summary_problems(TaggedSummary{ex.summary.tokens, tags, std::nullopt}).empty());
    }
  }
  ProxyModel<double> binary(vocab, tiny_dims(), LabelSpace::Binary, ProxyMode::HS, 1);
  const auto in = assemble_input(vocab, examples[0], ProxyMode::HS);
  for (int v : predict_labels(binary, in)) CHECK((v == 0 || v == 1));
  CHECK_THROWS_AS(predict_tags(binary, in), UnknownVariant);
}

TEST_CASE("proxy backward matches finite differences") {
  const auto ex = fixtures::mary_carter_example();
  const auto vocab = Vocab::build({ex});
  ProxyModel<double> model(vocab, nn::TransformerDims{1, 0, 8, 2, 16, 64}, LabelSpace::Multiclass,
                           ProxyMode::HS, 5);
  const auto in = assemble_input(vocab, ex, ProxyMode::HS);
  const auto targets = position_targets(in, ex.summary, LabelSpace::Multiclass);
  auto loss = [&](nn::Matrix<double>* grad) {
    typename ProxyModel<double>::Cache cache;
    const auto logits = model.forward(in.input_ids, cache);
    const auto probs = nn::softmax_rows(logits);
    double total = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) total -= std::log(probs(r, targets[r]));
    if (grad) {
      *grad = probs;
      for (Eigen::Index r = 0; r < logits.rows(); ++r) (*grad)(r, targets[r]) -= 1;
      model.backward(cache, *grad);
    }
    return total;
  };
  for (auto* p : model.parameters()) p->zero_grad();
  nn::Matrix<double> g;
  loss(&g);
  int checked = 0;
  for (auto* p : model.parameters()) {
    CAPTURE(p->name);
    double worst = 0, scale = 0;
    for (Eigen::Index i = 0; i < p->value.size(); i += 7) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + 1e-5;
      const double up = loss(nullptr);
      p->value.data()[i] = saved - 1e-5;
      const double down = loss(nullptr);
      p->value.data()[i] = saved;
      const double numeric = (up - down) / 2e-5;
      worst = std::max(worst, std::abs(numeric - p->grad.data()[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(static_cast<double>(p->grad.data()[i]))});
      ++checked;
    }
    CHECK(worst <= 1e-5 * std::max(scale, 1e-8));
  }
  CHECK(checked > 100);
}

TEST_CASE("training keeps the best epoch and reports validation") {
  SyntheticConfig sc;
  sc.dialogues = 6;
  const auto examples = generate_synthetic(sc);
  ProxyTrainConfig cfg;
  cfg.dims = tiny_dims();
  cfg.epochs = 3;
  cfg.learning_rate = 1e-3;
  int seen = 0;
  const auto r = train_proxy<double>(examples, {}, cfg, [&](const EpochReport&) { ++seen; });
  CHECK(seen == 3);
  REQUIRE(r.epochs.size() == 3);
  CHECK(r.step_losses.size() == 3 * examples.size());
  const auto& best = r.epochs[r.best_epoch - 1];
  for (const auto& e : r.epochs) {
    CHECK(std::make_pair(best.validation.f1, best.validation.accuracy) >=
          std::make_pair(e.validation.f1, e.validation.accuracy));
  }
  const auto again = evaluate_proxy(r.model, examples);
  CHECK(again.f1 == best.validation.f1);
  CHECK(again.accuracy == best.validation.accuracy);

  CHECK_THROWS_AS(train_proxy<double>({}, {}, cfg), EmptyDataset);
  cfg.best_model_metric = "loss";
  CHECK_THROWS_AS(train_proxy<double>(examples, {}, cfg), UnknownVariant);
}

TEST_CASE("prediction records round-trip") {
  PredictionRecord r{"d1", {"a", "b", "[EOS]"}, {0, 1, 5}, {0, 2, 0}, false, "length mismatch"};
  const auto back = prediction_from_jsonl(prediction_to_jsonl(r), 1);
  CHECK(back.dialogue_id == r.dialogue_id);
  CHECK(back.tokens == r.tokens);
  CHECK(back.pred_tags == r.pred_tags);
  CHECK(back.gold_tags == r.gold_tags);
  CHECK(back.valid == r.valid);
  CHECK(back.failure_reason == r.failure_reason);
  CHECK_THROWS_AS(prediction_from_jsonl("{}", 3), SchemaError);

  fixtures::TempDir dir;
  save_predictions((dir / "p.jsonl").string(), {r, r});
  CHECK(load_predictions((dir / "p.jsonl").string()).size() == 2);
}
