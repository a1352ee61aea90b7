#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "faithtag/corpus.hpp"
#include "fixtures.hpp"
#include "json.hpp"

using json = nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(FAITHTAG_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in);
  return json::parse(in);
}

}  // namespace

TEST_CASE("synth, split and stats") {
  fixtures::TempDir dir;
  const auto d = dir.path().string();
  auto r = run("synth --out " + d + "/c.jsonl --dialogues 25 --json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["examples"] == 50);
  CHECK(std::filesystem::exists(d + "/c.jsonl.manifest.json"));

  r = run("split --in " + d + "/c.jsonl --out-dir " + d + "/sp --seed 3 --json");
  REQUIRE(r.code == 0);
  const auto splits = json::parse(r.out)["splits"];
  CHECK(splits["train"]["dialogues"] == 19);
  CHECK(splits["validation"]["dialogues"] == 3);
  CHECK(splits["test"]["dialogues"] == 3);
  const auto manifest = read_json(d + "/sp/manifest.json");
  CHECK(manifest["command"] == "split");
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["tool_version"].is_string());
  CHECK(manifest["outputs"]["train"].is_string());

  r = run("stats --in " + d + "/sp/train.jsonl --json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["examples"] == 38);

  r = run("stats --in " + d + "/sp/train.jsonl");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("examples: 38") != std::string::npos);
}

TEST_CASE("flags override config, config overrides defaults") {
  fixtures::TempDir dir;
  const auto d = dir.path().string();
  REQUIRE(run("synth --out " + d + "/c.jsonl --dialogues 10").code == 0);
  {
    std::ofstream cfg(d + "/cfg.json");
    cfg << R"({"seed": 7, "split": {"ratios": "50,25,25"}})";
  }
  REQUIRE(run("--config " + d + "/cfg.json split --in " + d + "/c.jsonl --out-dir " + d + "/a").code == 0);
  auto m = read_json(d + "/a/manifest.json");
  CHECK(m["seed"] == 7);
  CHECK(m["config"]["ratios"] == json::array({50, 25, 25}));

  REQUIRE(run("--config " + d + "/cfg.json split --in " + d + "/c.jsonl --out-dir " + d + "/b --seed 9 --ratios 76,12,12")
              .code == 0);
  m = read_json(d + "/b/manifest.json");
  CHECK(m["seed"] == 9);
  CHECK(m["config"]["ratios"] == json::array({76, 12, 12}));

  REQUIRE(run("split --in " + d + "/c.jsonl --out-dir " + d + "/c").code == 0);
  CHECK(read_json(d + "/c/manifest.json")["seed"] == 42);
}

TEST_CASE("exit codes") {
  fixtures::TempDir dir;
  const auto d = dir.path().string();
  CHECK(run("").code == 1);
  CHECK(run("split --in x.jsonl --bogus").code == 1);
  CHECK(run("split --in " + d + "/missing.jsonl").code == 2);
  REQUIRE(run("synth --out " + d + "/c.jsonl --dialogues 5").code == 0);
  CHECK(run("split --in " + d + "/c.jsonl --ratios 50,50,0 --out-dir " + d + "/s").code == 1);
  {
    std::ofstream bad(d + "/bad.jsonl");
    bad << "{\"dialogue_id\": 3}\n";
  }
  const auto r = run("stats --in " + d + "/bad.jsonl --json");
  CHECK(r.code == 1);
  CHECK(json::parse(r.out)["error"] == "SchemaError");
  CHECK(run("generate --model " + d + "/c.jsonl --in " + d + "/c.jsonl --out " + d + "/g.jsonl").code == 2);
  CHECK(run("--version").code == 0);
}

TEST_CASE("train, generate and score") {
  fixtures::TempDir dir;
  const auto d = dir.path().string();
  REQUIRE(run("synth --out " + d + "/c.jsonl --dialogues 4").code == 0);
  const std::string small = " --d-model 16 --d-ff 32 --heads 2 --layers 1";

  REQUIRE(run("train-proxy --train " + d + "/c.jsonl --out-dir " + d + "/p --epochs 1 --lr 1e-3" + small).code == 0);
  CHECK(read_json(d + "/p/manifest.json")["config"]["mode"] == "HS");
  REQUIRE(run("generate --model " + d + "/p/proxy.ckpt --in " + d + "/c.jsonl --out " + d + "/pred.jsonl").code == 0);
  auto r = run("score-tags --pred " + d + "/pred.jsonl --gold " + d + "/c.jsonl --json");
  REQUIRE(r.code == 0);
  const auto scores = json::parse(r.out);
  CHECK(scores["scored"] == 8);
  CHECK(scores["accuracy"].get<double>() >= 0.0);
  r = run("score-tags --pred " + d + "/c.jsonl --gold " + d + "/c.jsonl --json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["f1"] == 1.0);
  r = run("score-tags --pred " + d + "/c.jsonl --gold " + d + "/c.jsonl --binary --json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["per_label"].size() == 1);

  REQUIRE(run("train-joint --train " + d + "/c.jsonl --out-dir " + d + "/j --epochs 1 --phase1-epochs 1 --lr 1e-3" +
              small + " --decoder-layers 1")
              .code == 0);
  std::ifstream curve(d + "/j/loss_curve.csv");
  std::string header;
  std::getline(curve, header);
  CHECK(header == "step,token_loss,tag_loss,joint_loss");
  REQUIRE(run("generate --model " + d + "/j/joint.ckpt --in " + d + "/c.jsonl --out " + d + "/gen.jsonl --max-len 5")
              .code == 0);
  std::ifstream gen(d + "/gen.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(gen, line)) {
    const auto j = json::parse(line);
    CHECK(j["tokens"].size() == j["tags"].size());
    ++lines;
  }
  CHECK(lines == 8);
}

TEST_CASE("tag-prompt with scripted replies") {
  fixtures::TempDir dir;
  const auto d = dir.path().string();
  faithtag::save_dataset(std::vector<faithtag::DialogueExample>{fixtures::mary_carter_example()}, d + "/c.jsonl");
  {
    std::ofstream fx(d + "/fx.json");
    fx << json{{"mary-carter",
                {"sorry", "Tags- <TG>Adam(W) will(O) lend(O) Mary(O) a(O) box(OB) .(O)<TG>\n"
                          "Missing Information- <MI>Yes<MI>"}}}
              .dump();
  }
  auto r = run("tag-prompt --in " + d + "/c.jsonl --fixture " + d + "/fx.json --out " + d + "/p.jsonl --json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["validity_rate"] == 1.0);
  r = run("score-tags --pred " + d + "/p.jsonl --json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["f1"] == 1.0);

  r = run("tag-prompt --in " + d + "/c.jsonl --fixture " + d + "/fx.json --out " + d + "/q.jsonl --retry 0 --json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["validity_rate"] == 0.0);
  r = run("score-tags --pred " + d + "/q.jsonl --json");
  CHECK(json::parse(r.out)["skipped_invalid"] == 1);

  {
    std::ofstream fx(d + "/empty.json");
    fx << "{}";
  }
  CHECK(run("tag-prompt --in " + d + "/c.jsonl --fixture " + d + "/empty.json --out " + d + "/z.jsonl").code == 2);
  CHECK(run("tag-prompt --in " + d + "/c.jsonl --fixture " + d + "/fx.json --out " + d + "/z.jsonl --variant summ-few")
            .code == 1);
}

TEST_CASE("score-rouge") {
  fixtures::TempDir dir;
  const auto d = dir.path().string();
  {
    std::ofstream p(d + "/pairs.jsonl");
    p << R"({"reference": "the cat sat on the mat", "candidate": "the cat sat on the mat"})" << '\n';
  }
  const auto r = run("score-rouge --pairs " + d + "/pairs.jsonl --json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["scores"]["rouge1"]["fmeasure"] == 1.0);
}

TEST_CASE("export from a journal") {
  fixtures::TempDir dir;
  const auto d = dir.path().string();
  CHECK(run("export --journal " + d + "/none.jsonl --out " + d + "/e.jsonl").code == 2);
}
