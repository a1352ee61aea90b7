#include <cmath>
#include <random>

#include "doctest.h"
#include "faithtag/joint_model.hpp"
#include "faithtag/synthetic.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace faithtag;
using namespace faithtag::joint;
using nn::Matrix;

namespace {

nn::TransformerDims tiny_dims() { return nn::TransformerDims{1, 1, 8, 2, 16, 32}; }

Matrix<double> random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0, 1);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Plain-loop cross-entropy mean over the given rows.
double naive_ce(const Matrix<double>& logits, const std::vector<int>& targets, const std::vector<bool>& use) {
  double total = 0;
  int count = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (!use[r]) continue;
    double z = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c));
    total += std::log(z) - logits(r, targets[r]);
    ++count;
  }
  return total / count;
}

std::vector<DialogueExample> few_examples() {
  SyntheticConfig cfg;
  cfg.dialogues = 3;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("shift maps 0..5 onto 3..8") {
  for (int i = 0; i <= 5; ++i) {
    CHECK(shift_tag_id(i) == i + 3);
    CHECK(unshift_tag_id(shift_tag_id(i)) == i);
  }
  CHECK_THROWS_AS(shift_tag_id(6), OutOfRangeTagId);
  CHECK_THROWS_AS(shift_tag_id(-1), OutOfRangeTagId);
  CHECK_THROWS_AS(unshift_tag_id(2), OutOfRangeTagId);
  CHECK_THROWS_AS(unshift_tag_id(9), OutOfRangeTagId);
  CHECK(shift_tags(std::vector<int>{0, 5}) == std::vector<int>{3, 8});
  CHECK(unshift_tags(std::vector<int>{3, 8}) == std::vector<int>{0, 5});
  CHECK(shifted_id(Tag::M) == 8);
}

TEST_CASE("special_token_mask") {
  const std::vector<int> ids = {Vocab::kBos, 7, Vocab::kPad, Vocab::kEosSlot, Vocab::kEos, Vocab::kSep, Vocab::kUnk};
  CHECK(special_token_mask(ids) == std::vector<bool>{false, true, false, true, false, false, true});
}

TEST_CASE("joint_loss matches a naive loop") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 6);
    const auto tok = random_matrix(rng, n, 12);
    const auto tag = random_matrix(rng, n, kTagClasses);
    std::vector<int> targets(n), tags(n);
    for (int i = 0; i < n; ++i) {
      targets[i] = 4 + static_cast<int>(rng() % 8);
      tags[i] = 3 + static_cast<int>(rng() % 6);
    }
    targets[n - 1] = Vocab::kEos;
    if (n > 2) targets[0] = Vocab::kPad;
    const auto mask = special_token_mask(targets);
    std::vector<bool> non_pad(n);
    for (int i = 0; i < n; ++i) non_pad[i] = targets[i] != Vocab::kPad;
    const double lambda = 0.3;
    const auto l = joint_loss<double>(tok, tag, targets, tags, mask, lambda);
    const double token = naive_ce(tok, targets, non_pad);
    const double tagl = naive_ce(tag, tags, mask);
    CHECK(std::abs(l.token - token) < 1e-10);
    CHECK(std::abs(l.tag - tagl) < 1e-10);
    CHECK(std::abs(l.joint - (token + lambda * tagl)) < 1e-10);
    CHECK(std::abs(tag_loss<double>(tag, tags, mask) - tagl) < 1e-10);
  }
}

TEST_CASE("joint_loss errors") {
  std::mt19937_64 rng(1);
  const auto tok = random_matrix(rng, 3, 10);
  const auto tag = random_matrix(rng, 3, kTagClasses);
  const std::vector<int> t = {5, 6, Vocab::kEos};
  const std::vector<int> g = {3, 4, -1};
  CHECK_THROWS_AS(joint_loss<double>(tok, tag, std::vector<int>{5, 6}, g, special_token_mask(t), 1.0),
                  DimensionMismatch);
  CHECK_THROWS_AS(joint_loss<double>(tok, tag, t, g, {false, false, false}, 1.0), NoValidPositions);
  CHECK_THROWS_AS(joint_loss<double>(tok, tag, t, std::vector<int>{3, 1, -1}, special_token_mask(t), 1.0),
                  OutOfRangeTagId);
}

TEST_CASE("loss gradients match finite differences of the loss") {
  std::mt19937_64 rng(9);
  auto tok = random_matrix(rng, 4, 7);
  auto tag = random_matrix(rng, 4, kTagClasses);
  const std::vector<int> targets = {4, 6, 5, Vocab::kEos};
  const std::vector<int> tags = {7, 3, 8, -1};
  const auto mask = special_token_mask(targets);
  LossGradients<double> g;
  joint_loss<double>(tok, tag, targets, tags, mask, 0.5, &g);
  auto f = [&] { return static_cast<double>(joint_loss<double>(tok, tag, targets, tags, mask, 0.5).joint); };
  CHECK(oracle::max_relative_error(g.token_logits, oracle::central_differences(tok, f, 1e-6)) < 1e-7);
  CHECK(oracle::max_relative_error(g.tag_logits, oracle::central_differences(tag, f, 1e-6)) < 1e-7);
}

TEST_CASE("make_sequence lays out teacher forcing") {
  const auto ex = fixtures::mary_carter_example();
  const auto vocab = Vocab::build({ex});
  const auto seq = make_sequence(vocab, ex, 512);
  const std::size_t n = ex.summary.tokens.size();
  REQUIRE(seq.decoder_input.size() == n + 1);
  REQUIRE(seq.target_tokens.size() == n + 1);
  CHECK(seq.decoder_input[0] == Vocab::kBos);
  CHECK(seq.target_tokens.back() == Vocab::kEos);
  CHECK(seq.target_tokens[n - 1] == Vocab::kEosSlot);
  CHECK(seq.mask.back() == false);
  CHECK(seq.target_tags[0] == shifted_id(Tag::W));
  CHECK(seq.target_tags[n - 1] == shifted_id(Tag::M));
  CHECK(seq.target_tags[n] == -1);
  CHECK(seq.source == vocab.encode(flatten_dialogue(ex.dialogue)));

  const auto cut = encode_source(vocab, ex.dialogue, 4);
  CHECK(cut.size() == 4);
  CHECK(std::equal(cut.begin(), cut.end(), seq.source.end() - 4));
}

TEST_CASE("model gradients match finite differences") {
  Vocab vocab = fixtures::small_vocab(10);
  JointModel<double> model(vocab, tiny_dims(), 3);
  const std::vector<int> source = {6, 7, 8, 9};
  const std::vector<int> dec = {Vocab::kBos, 10, 11};
  const std::vector<int> targets = {10, 11, Vocab::kEos};
  const std::vector<int> tags = {4, 7, -1};
  const auto mask = special_token_mask(targets);
  auto loss = [&] {
    typename JointModel<double>::Cache cache;
    const auto out = model.forward(source, dec, cache);
    return static_cast<double>(joint_loss<double>(out.token_logits, out.tag_logits, targets, tags, mask, 0.8).joint);
  };
  for (auto* p : model.parameters()) p->zero_grad();
  typename JointModel<double>::Cache cache;
  const auto out = model.forward(source, dec, cache);
  LossGradients<double> g;
  joint_loss<double>(out.token_logits, out.tag_logits, targets, tags, mask, 0.8, &g);
  model.backward(cache, g.token_logits, g.tag_logits);
  for (auto* p : model.parameters()) {
    CAPTURE(p->name);
    const auto numeric = oracle::central_differences(p->value, loss, 1e-4);
    CHECK(oracle::max_relative_error(p->grad, numeric) < 1e-5);
  }
}

TEST_CASE("phase 1 touches only the tag head and ignores lambda") {
  const auto examples = few_examples();
  JointTrainConfig cfg;
  cfg.dims = tiny_dims();
  cfg.phase1_epochs = 2;
  cfg.learning_rate = 1e-3;
  auto base = make_joint_model<double>(examples, cfg);
  auto a = base;
  auto b = base;
  train_phase1(a, examples, cfg);
  cfg.lambda_tag = 0.0;
  train_phase1(b, examples, cfg);
  const auto pa = a.parameters(), pb = b.parameters(), p0 = base.parameters();
  const auto heads = a.head_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CAPTURE(pa[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
    const bool is_head = std::find(heads.begin(), heads.end(), pa[i]) != heads.end();
    CHECK((pa[i]->value != p0[i]->value) == is_head);
  }
  CHECK_THROWS_AS(train_phase1(a, {}, cfg), EmptyDataset);
}

TEST_CASE("phase 1 tag loss falls on one example") {
  const std::vector<DialogueExample> one = {fixtures::mary_carter_example()};
  JointTrainConfig cfg;
  cfg.dims = tiny_dims();
  cfg.phase1_epochs = 50;
  cfg.learning_rate = 1e-2;
  auto model = make_joint_model<double>(one, cfg);
  const auto r = train_phase1(model, one, cfg);
  REQUIRE(r.steps.size() == 50);
  for (int i = 1; i < 10; ++i) CHECK(r.steps[i].tag_loss < r.steps[i - 1].tag_loss);
}

TEST_CASE("phase 2 is deterministic and lambda 0 leaves the tag head alone") {
  const auto examples = few_examples();
  JointTrainConfig cfg;
  cfg.dims = tiny_dims();
  cfg.epochs = 2;
  cfg.learning_rate = 1e-3;
  auto m1 = make_joint_model<double>(examples, cfg);
  auto m2 = make_joint_model<double>(examples, cfg);
  const auto r1 = train_phase2(m1, examples, cfg);
  const auto r2 = train_phase2(m2, examples, cfg);
  REQUIRE(r1.steps.size() == r2.steps.size());
  for (std::size_t i = 0; i < r1.steps.size(); ++i) CHECK(r1.steps[i].joint_loss == r2.steps[i].joint_loss);
  CHECK(r1.epoch_losses.size() == 2);

  cfg.lambda_tag = 0.0;
  cfg.weight_decay = 0.0;
  auto m3 = make_joint_model<double>(examples, cfg);
  const auto before = m3.heads().tag_head.weight.value;
  train_phase2(m3, examples, cfg);
  CHECK(m3.heads().tag_head.weight.value == before);
  CHECK(m3.heads().tag_head.weight.grad.isZero(0));
}

TEST_CASE("evaluate_loss averages teacher-forced losses") {
  const auto examples = few_examples();
  JointTrainConfig cfg;
  cfg.dims = tiny_dims();
  const auto model = make_joint_model<double>(examples, cfg);
  const auto l = evaluate_loss(model, examples, 1.0);
  CHECK(l.token_loss > 0);
  CHECK(l.joint_loss == doctest::Approx(l.token_loss + l.tag_loss));
  const double acc = teacher_forced_tag_accuracy(model, examples);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}

TEST_CASE("generation contract on random models") {
  Vocab vocab = fixtures::small_vocab(20);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    JointModel<double> model(vocab, tiny_dims(), seed);
    std::vector<int> source = {6, 7, static_cast<int>(8 + seed % 10)};
    const int max_len = 1 + static_cast<int>(seed % 9);
    const auto g = generate_with_tags(model, source, max_len);
    REQUIRE(g.tokens.size() == g.tags.size());
    REQUIRE(!g.tokens.empty());
    CHECK(static_cast<int>(g.tokens.size()) <= max_len);
    CHECK(g.tokens.back() == kEosToken);
    CHECK((g.tags.back() == Tag::O || g.tags.back() == Tag::M));
    for (std::size_t i = 0; i + 1 < g.tags.size(); ++i) {
      CHECK(g.tags[i] != Tag::M);
      CHECK(g.tokens[i] != kEosToken);
    }
  }
  JointModel<double> empty;
  CHECK_THROWS_AS(generate_with_tags(empty, std::vector<int>{6}, 4), ModelNotTrained);
  JointModel<double> model(vocab, tiny_dims(), 1);
  CHECK_THROWS_AS(generate_with_tags(model, std::vector<int>{6}, 0), DimensionMismatch);
}

TEST_CASE("float and double models agree closely") {
  Vocab vocab = fixtures::small_vocab(10);
  JointModel<double> md(vocab, tiny_dims(), 4);
  JointModel<float> mf(vocab, tiny_dims(), 4);
  const std::vector<int> src = {6, 7, 8};
  const std::vector<int> dec = {Vocab::kBos, 9};
  typename JointModel<double>::Cache cd;
  typename JointModel<float>::Cache cf;
  const auto od = md.forward(src, dec, cd);
  const auto of = mf.forward(src, dec, cf);
  CHECK((od.token_logits - of.token_logits.cast<double>()).cwiseAbs().maxCoeff() < 1e-4);
}
