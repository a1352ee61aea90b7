#include <fstream>

#include "doctest.h"
#include "faithtag/checkpoint.hpp"
#include "fixtures.hpp"

using namespace faithtag;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

}  // namespace

TEST_CASE("joint checkpoints restore identical outputs") {
  fixtures::TempDir dir;
  const auto ex = fixtures::mary_carter_example();
  joint::JointModel<double> model(Vocab::build({ex}), nn::TransformerDims{1, 1, 8, 2, 16, 32}, 7);
  save_joint_checkpoint(dir / "j.ckpt", model, R"({"note": 1})");
  CHECK(checkpoint_kind(dir / "j.ckpt") == "joint");
  auto back = load_joint_checkpoint<double>(dir / "j.ckpt");
  CHECK(back.vocab().tokens() == model.vocab().tokens());
  const auto pa = model.parameters(), pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  const auto ga = joint::generate_with_tags(model, ex.dialogue, 6);
  const auto gb = joint::generate_with_tags(back, ex.dialogue, 6);
  CHECK(ga.tokens == gb.tokens);
  CHECK(ga.tags == gb.tags);

  CHECK_THROWS_AS(load_proxy_checkpoint<double>(dir / "j.ckpt"), CheckpointError);
  auto as_float = load_joint_checkpoint<float>(dir / "j.ckpt");
  CHECK(as_float.parameter_count() == model.parameter_count());
}

TEST_CASE("proxy checkpoints keep mode and label space") {
  fixtures::TempDir dir;
  const auto ex = fixtures::mary_carter_example();
  proxy::ProxyModel<double> model(Vocab::build({ex}), nn::TransformerDims{1, 0, 8, 2, 16, 64},
                                  proxy::LabelSpace::Binary, proxy::ProxyMode::GS, 3);
  save_proxy_checkpoint(dir / "p.ckpt", model);
  CHECK(checkpoint_kind(dir / "p.ckpt") == "proxy");
  const auto back = load_proxy_checkpoint<double>(dir / "p.ckpt");
  CHECK(back.label_space() == proxy::LabelSpace::Binary);
  CHECK(back.mode() == proxy::ProxyMode::GS);
  const auto in = proxy::assemble_input(back.vocab(), ex, proxy::ProxyMode::GS);
  CHECK(back.logits(in.input_ids) == model.logits(in.input_ids));
}

TEST_CASE("damaged checkpoints are rejected") {
  fixtures::TempDir dir;
  const auto ex = fixtures::mary_carter_example();
  joint::JointModel<double> model(Vocab::build({ex}), nn::TransformerDims{1, 1, 8, 2, 16, 32}, 7);
  save_joint_checkpoint(dir / "j.ckpt", model);
  const std::string good = slurp(dir / "j.ckpt");

  spit(dir / "trunc.ckpt", good.substr(0, good.size() - 8));
  CHECK_THROWS_AS(load_joint_checkpoint<double>(dir / "trunc.ckpt"), CheckpointError);
  spit(dir / "extra.ckpt", good + "x");
  CHECK_THROWS_AS(load_joint_checkpoint<double>(dir / "extra.ckpt"), CheckpointError);
  spit(dir / "magic.ckpt", "NOTACKPT" + good.substr(8));
  CHECK_THROWS_AS(checkpoint_kind(dir / "magic.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_joint_checkpoint<double>(dir / "none.ckpt"), IoError);

  joint::JointModel<double> empty;
  CHECK_THROWS_AS(save_joint_checkpoint(dir / "e.ckpt", empty), ModelNotTrained);
}

TEST_CASE("loss curve CSV") {
  fixtures::TempDir dir;
  write_loss_curve(dir / "l.csv", {{1, 0.5, 0.25, 0.75}, {2, 0.4, 0.2, 0.6}});
  const auto text = slurp(dir / "l.csv");
  CHECK(text.rfind("step,token_loss,tag_loss,joint_loss\n", 0) == 0);
  CHECK(text.find("\n2,0.40000000000000002,") != std::string::npos);
}
