// faithtag command line.

#include <chrono>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "faithtag/checkpoint.hpp"
#include "faithtag/corpus.hpp"
#include "faithtag/http_api.hpp"
#include "faithtag/joint_model.hpp"
#include "faithtag/metrics.hpp"
#include "faithtag/prompt_tagger.hpp"
#include "faithtag/proxy_tagger.hpp"
#include "faithtag/service.hpp"
#include "faithtag/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace faithtag;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Output of one command plus the manifest written next to its outputs.
struct Run {
  std::string command;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::object();
  json result = json::object();
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> manifest_path;
  std::string started = utc_now();
};

void write_manifest(const Run& run) {
  if (!run.manifest_path) return;
  json m = {{"command", run.command},     {"config", run.config},      {"inputs", run.inputs},
            {"outputs", run.outputs},     {"started_at", run.started}, {"finished_at", utc_now()},
            {"tool_version", kToolVersion}};
  m["seed"] = run.seed ? json(*run.seed) : json(nullptr);
  std::ofstream out(*run.manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + run.manifest_path->string());
  out << m.dump(2) << '\n';
}

fs::path manifest_for_file(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

void ensure_dir(const fs::path& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

/// Options of `sub` that the user did not pass take values from the config
/// file: top-level keys first, then a section named after the command.
void apply_config(CLI::App* sub, const json& config) {
  json merged = json::object();
  for (auto it = config.begin(); it != config.end(); ++it) {
    if (!it->is_object()) merged[it.key()] = *it;
  }
  if (config.contains(sub->get_name()) && config[sub->get_name()].is_object()) {
    for (auto it = config[sub->get_name()].begin(); it != config[sub->get_name()].end(); ++it) {
      merged[it.key()] = *it;
    }
  }
  for (auto it = merged.begin(); it != merged.end(); ++it) {
    std::string key = it.key();
    std::replace(key.begin(), key.end(), '_', '-');
    CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      continue;
    }
    if (opt->count() > 0 || key == "config") continue;
    std::string value;
    if (it->is_string()) {
      value = it->get<std::string>();
    } else if (it->is_boolean()) {
      value = it->get<bool>() ? "true" : "false";
    } else if (it->is_array()) {
      for (const auto& v : *it) {
        if (!value.empty()) value += ",";
        value += v.is_string() ? v.get<std::string>() : v.dump();
      }
    } else {
      value = it->dump();
    }
    opt->add_result(value);
    opt->run_callback();
  }
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw SchemaError(1, "config file must be a JSON object");
  return j;
}

json prf_json(const metrics::PRFReport& r) {
  json per_label = json::object();
  for (const auto& [name, s] : r.per_label) {
    per_label[name] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  }
  json confusion = json::array();
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < r.confusion.cols(); ++j) row.push_back(r.confusion(i, j));
    confusion.push_back(std::move(row));
  }
  return {{"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"accuracy", r.accuracy},
          {"degenerate", r.degenerate},
          {"true_positives", r.true_positives},
          {"predicted_spans", r.predicted_spans},
          {"gold_spans", r.gold_spans},
          {"tokens", r.tokens},
          {"per_label", std::move(per_label)},
          {"confusion", std::move(confusion)}};
}

json stats_json(const TagStats& stats, std::size_t examples) {
  json tags = json::object();
  for (const auto& [tag, c] : stats) tags[std::string(tag_code(tag))] = {{"count", c.count}, {"fraction", c.fraction}};
  return {{"examples", examples}, {"tags", std::move(tags)}};
}

nn::TransformerDims dims_from_flags(int layers, int decoder_layers, int d_model, int heads, int d_ff, int max_len) {
  return nn::TransformerDims{layers, decoder_layers, d_model, heads, d_ff, max_len};
}

std::vector<int> parse_ratio_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw BadRatio("--ratios must be three integers, got '" + text + "'");
    }
  }
  if (out.size() != 3) throw BadRatio("--ratios must be three integers, got '" + text + "'");
  return out;
}

std::atomic<service::HttpApi*> g_server{nullptr};

void handle_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

/// Flattened "a.b: value" lines.
void print_human(const json& j, const std::string& prefix) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      print_human(*it, prefix.empty() ? it.key() : prefix + "." + it.key());
    }
  } else if (!prefix.empty()) {
    std::cout << prefix << ": " << (j.is_string() ? j.get<std::string>() : j.dump()) << '\n';
  }
}

bool is_runtime_error(const Error& e) {
  const std::string k = e.kind();
  return k == "IoError" || k == "CheckpointError" || k == "ClientError" || k == "ModelNotTrained";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token-level faithfulness tagging for dialogue summaries"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();
  bool json_out = false;
  std::string config_path;
  app.add_flag("--json", json_out, "Print machine-readable JSON to stdout");
  app.add_option("--config", config_path, "JSON config; flags override it, it overrides defaults");

  Run run;

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Write the rule-corrupted synthetic corpus");
  std::string synth_out;
  SyntheticConfig synth_cfg;
  synth->add_option("--out", synth_out, "Output JSONL")->required();
  synth->add_option("--dialogues", synth_cfg.dialogues, "Number of dialogues")->capture_default_str();
  synth->add_option("--per-dialogue", synth_cfg.summaries_per_dialogue, "Summaries per dialogue")
      ->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "Random seed")->capture_default_str();
  synth->callback([&] {
    auto examples = generate_synthetic(synth_cfg);
    ensure_parent(synth_out);
    save_dataset(examples, synth_out);
    run.config = {{"dialogues", synth_cfg.dialogues}, {"per_dialogue", synth_cfg.summaries_per_dialogue}};
    run.seed = synth_cfg.seed;
    run.outputs = {{"dataset", synth_out}};
    run.manifest_path = manifest_for_file(synth_out);
    run.result = {{"examples", examples.size()}, {"out", synth_out}};
  });

  // split ------------------------------------------------------------------
  auto* split = app.add_subcommand("split", "Split a corpus by dialogue into train/validation/test");
  std::string split_in, split_out_dir = ".", split_ratios = "76,12,12";
  std::uint64_t split_seed = 42;
  split->add_option("--in", split_in, "Corpus JSONL")->required();
  split->add_option("--out-dir", split_out_dir, "Directory for the three split files")->capture_default_str();
  split->add_option("--ratios", split_ratios, "Percentages train,validation,test")->capture_default_str();
  split->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
  split->callback([&] {
    const auto r = parse_ratio_list(split_ratios);
    auto ds = split_by_dialogue(load_dataset(split_in), SplitRatios{r[0], r[1], r[2]}, split_seed);
    ensure_dir(split_out_dir);
    json counts = json::object();
    for (Split s : {Split::Train, Split::Validation, Split::Test}) {
      const auto part = ds.subset(s);
      const fs::path file = fs::path(split_out_dir) / (std::string(split_name(s)) + ".jsonl");
      save_dataset(part, file);
      run.outputs[std::string(split_name(s))] = file.string();
      std::size_t dialogues = 0;
      for (const auto& [id, assigned] : *ds.split_assignment) dialogues += assigned == s ? 1 : 0;
      counts[std::string(split_name(s))] = {{"examples", part.size()}, {"dialogues", dialogues}};
    }
    run.config = {{"ratios", r}};
    run.seed = split_seed;
    run.inputs = {{"dataset", split_in}};
    run.manifest_path = fs::path(split_out_dir) / "manifest.json";
    run.result = {{"splits", counts}};
  });

  // stats ------------------------------------------------------------------
  auto* stats = app.add_subcommand("stats", "Tag counts and fractions of a corpus");
  std::string stats_in;
  stats->add_option("--in", stats_in, "Corpus JSONL")->required();
  stats->callback([&] {
    const auto ds = load_dataset(stats_in);
    run.inputs = {{"dataset", stats_in}};
    run.result = stats_json(tag_stats(ds.examples), ds.examples.size());
  });

  // train-joint ------------------------------------------------------------
  auto* tj = app.add_subcommand("train-joint", "Train the summarizer with a tag head (classifier, then joint)");
  std::string tj_train, tj_valid, tj_out = "joint-run";
  joint::JointTrainConfig jc;
  int tj_layers = 2, tj_dec_layers = 2, tj_d = 128, tj_heads = 4, tj_ff = 512, tj_max = 512;
  bool tj_skip_phase1 = false;
  tj->add_option("--train", tj_train, "Training corpus JSONL")->required();
  tj->add_option("--valid", tj_valid, "Validation corpus JSONL (loss reported per epoch)");
  tj->add_option("--out-dir", tj_out, "Output directory")->capture_default_str();
  tj->add_option("--lr", jc.learning_rate, "Learning rate")->capture_default_str();
  tj->add_option("--batch", jc.train_batch, "Joint-phase batch size")->capture_default_str();
  tj->add_option("--weight-decay", jc.weight_decay, "Decoupled weight decay")->capture_default_str();
  tj->add_option("--epochs", jc.epochs, "Joint-phase epochs")->capture_default_str();
  tj->add_option("--phase1-epochs", jc.phase1_epochs, "Classifier-phase epochs")->capture_default_str();
  tj->add_option("--phase1-batch", jc.phase1_batch, "Classifier-phase batch size")->capture_default_str();
  tj->add_flag("--phase1-unfreeze-decoder", jc.phase1_unfreeze_decoder, "Also update the decoder in phase 1");
  tj->add_flag("--skip-phase1", tj_skip_phase1, "Start the joint phase from a fresh model");
  tj->add_option("--lambda", jc.lambda_tag, "Weight of the tag loss")->capture_default_str();
  tj->add_option("--seed", jc.seed, "Seed for init and shuffling")->capture_default_str();
  tj->add_option("--layers", tj_layers, "Encoder layers")->capture_default_str();
  tj->add_option("--decoder-layers", tj_dec_layers, "Decoder layers")->capture_default_str();
  tj->add_option("--d-model", tj_d, "Model width")->capture_default_str();
  tj->add_option("--heads", tj_heads, "Attention heads")->capture_default_str();
  tj->add_option("--d-ff", tj_ff, "Feed-forward width")->capture_default_str();
  tj->add_option("--max-len", tj_max, "Maximum sequence length")->capture_default_str();
  tj->callback([&] {
    jc.dims = dims_from_flags(tj_layers, tj_dec_layers, tj_d, tj_heads, tj_ff, tj_max);
    jc.validate();
    const auto train = load_dataset(tj_train).examples;
    ensure_dir(tj_out);
    auto model = joint::make_joint_model<double>(train, jc);
    auto log = [&](const char* phase) {
      return [&, phase](int epoch, double loss) {
        if (!json_out) std::cerr << phase << " epoch " << epoch << " loss " << loss << '\n';
      };
    };
    json phases = json::object();
    if (!tj_skip_phase1) {
      auto p1 = joint::train_phase1(model, train, jc, log("classifier"));
      write_loss_curve(fs::path(tj_out) / "phase1_loss.csv", p1.steps);
      phases["classifier"] = {{"initial_loss", p1.initial_loss}, {"epoch_losses", p1.epoch_losses}};
      run.outputs["phase1_loss_curve"] = (fs::path(tj_out) / "phase1_loss.csv").string();
    }
    auto p2 = joint::train_phase2(model, train, jc, log("joint"));
    write_loss_curve(fs::path(tj_out) / "loss_curve.csv", p2.steps);
    phases["joint"] = {{"initial_loss", p2.initial_loss}, {"epoch_losses", p2.epoch_losses}};
    run.config = {{"lr", jc.learning_rate},        {"batch", jc.train_batch},
                  {"weight_decay", jc.weight_decay}, {"epochs", jc.epochs},
                  {"phase1_epochs", jc.phase1_epochs}, {"phase1_batch", jc.phase1_batch},
                  {"phase1_unfreeze_decoder", jc.phase1_unfreeze_decoder},
                  {"skip_phase1", tj_skip_phase1},   {"lambda", jc.lambda_tag},
                  {"layers", tj_layers},             {"decoder_layers", tj_dec_layers},
                  {"d_model", tj_d},                 {"heads", tj_heads},
                  {"d_ff", tj_ff},                   {"max_len", tj_max}};
    run.seed = jc.seed;
    const fs::path ckpt = fs::path(tj_out) / "joint.ckpt";
    save_joint_checkpoint(ckpt, model, run.config.dump());
    run.inputs = {{"train", tj_train}};
    run.outputs["checkpoint"] = ckpt.string();
    run.outputs["loss_curve"] = (fs::path(tj_out) / "loss_curve.csv").string();
    run.result = {{"phases", phases}, {"parameters", model.parameter_count()}};
    if (!tj_valid.empty()) {
      const auto valid = load_dataset(tj_valid).examples;
      const auto l = joint::evaluate_loss(model, valid, jc.lambda_tag);
      run.inputs["valid"] = tj_valid;
      run.result["validation"] = {{"token_loss", l.token_loss}, {"tag_loss", l.tag_loss}, {"joint_loss", l.joint_loss}};
    }
    run.manifest_path = fs::path(tj_out) / "manifest.json";
  });

  // train-proxy ------------------------------------------------------------
  auto* tp = app.add_subcommand("train-proxy", "Train the encoder-only tagger over dialogue and summary");
  std::string tp_train, tp_valid, tp_out = "proxy-run", tp_mode = "HS", tp_space = "multiclass";
  proxy::ProxyTrainConfig pc;
  int tp_layers = 2, tp_d = 128, tp_heads = 4, tp_ff = 512, tp_max = 512;
  tp->add_option("--train", tp_train, "Training corpus JSONL")->required();
  tp->add_option("--valid", tp_valid, "Validation corpus JSONL used to pick the best epoch");
  tp->add_option("--out-dir", tp_out, "Output directory")->capture_default_str();
  tp->add_option("--mode", tp_mode, "HS (summary only) or GS (with gold summary)")
      ->check(CLI::IsMember({"HS", "GS", "hs", "gs"}))
      ->capture_default_str();
  tp->add_option("--label-space", tp_space, "multiclass or binary")
      ->check(CLI::IsMember({"multiclass", "binary"}))
      ->capture_default_str();
  tp->add_option("--lr", pc.learning_rate, "Learning rate")->capture_default_str();
  tp->add_option("--batch", pc.batch_size, "Batch size")->capture_default_str();
  tp->add_option("--epochs", pc.epochs, "Epochs")->capture_default_str();
  tp->add_option("--weight-decay", pc.weight_decay, "Decoupled weight decay")->capture_default_str();
  tp->add_option("--best-metric", pc.best_model_metric, "f1 or accuracy")->capture_default_str();
  tp->add_option("--seed", pc.seed, "Seed for init and shuffling")->capture_default_str();
  tp->add_option("--layers", tp_layers, "Encoder layers")->capture_default_str();
  tp->add_option("--d-model", tp_d, "Model width")->capture_default_str();
  tp->add_option("--heads", tp_heads, "Attention heads")->capture_default_str();
  tp->add_option("--d-ff", tp_ff, "Feed-forward width")->capture_default_str();
  tp->add_option("--max-len", tp_max, "Maximum input length")->capture_default_str();
  tp->callback([&] {
    pc.mode = proxy::parse_mode(tp_mode);
    pc.label_space = tp_space == "binary" ? proxy::LabelSpace::Binary : proxy::LabelSpace::Multiclass;
    pc.dims = dims_from_flags(tp_layers, 0, tp_d, tp_heads, tp_ff, tp_max);
    pc.validate();
    const auto train = load_dataset(tp_train).examples;
    const auto valid = tp_valid.empty() ? std::vector<DialogueExample>{} : load_dataset(tp_valid).examples;
    ensure_dir(tp_out);
    auto result = proxy::train_proxy<double>(train, valid, pc, [&](const proxy::EpochReport& e) {
      if (!json_out) {
        std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " f1 " << e.validation.f1 << " accuracy "
                  << e.validation.accuracy << '\n';
      }
    });
    run.config = {{"mode", std::string(proxy::mode_name(pc.mode))},
                  {"label_space", tp_space},
                  {"lr", pc.learning_rate},
                  {"batch", pc.batch_size},
                  {"epochs", pc.epochs},
                  {"weight_decay", pc.weight_decay},
                  {"best_metric", pc.best_model_metric},
                  {"layers", tp_layers},
                  {"d_model", tp_d},
                  {"heads", tp_heads},
                  {"d_ff", tp_ff},
                  {"max_len", tp_max}};
    run.seed = pc.seed;
    const fs::path ckpt = fs::path(tp_out) / "proxy.ckpt";
    save_proxy_checkpoint(ckpt, result.model, run.config.dump());
    json epochs = json::array();
    for (const auto& e : result.epochs) {
      epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"f1", e.validation.f1},
                        {"accuracy", e.validation.accuracy}});
    }
    run.inputs = {{"train", tp_train}};
    if (!tp_valid.empty()) run.inputs["valid"] = tp_valid;
    run.outputs = {{"checkpoint", ckpt.string()}};
    run.result = {{"best_epoch", result.best_epoch}, {"epochs", epochs}};
    run.manifest_path = fs::path(tp_out) / "manifest.json";
  });

  // generate ---------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "Decode summaries with tags (joint) or tag summaries (proxy)");
  std::string gen_model, gen_in, gen_out;
  int gen_max = 64;
  gen->add_option("--model", gen_model, "Checkpoint from train-joint or train-proxy")->required();
  gen->add_option("--in", gen_in, "Corpus JSONL")->required();
  gen->add_option("--out", gen_out, "Output JSONL")->required();
  gen->add_option("--max-len", gen_max, "Longest generated summary (joint)")->capture_default_str();
  gen->callback([&] {
    const auto examples = load_dataset(gen_in).examples;
    ensure_parent(gen_out);
    const std::string kind = checkpoint_kind(gen_model);
    if (kind == "joint") {
      const auto model = load_joint_checkpoint<double>(gen_model);
      std::ofstream out(gen_out, std::ios::trunc);
      if (!out) throw IoError("cannot write " + gen_out);
      for (const auto& ex : examples) {
        const auto g = joint::generate_with_tags(model, ex.dialogue, gen_max);
        json tags = json::array();
        for (Tag t : g.tags) tags.push_back(std::string(tag_code(t)));
        out << json{{"dialogue_id", ex.dialogue.id}, {"tokens", g.tokens}, {"tags", tags},
                    {"inline", render_inline_tagged(g.tokens, g.tags)}}
                   .dump()
            << '\n';
      }
    } else {
      const auto model = load_proxy_checkpoint<double>(gen_model);
      proxy::save_predictions(gen_out, proxy::predict_dataset(model, examples));
    }
    run.config = {{"max_len", gen_max}, {"kind", kind}};
    run.inputs = {{"model", gen_model}, {"dataset", gen_in}};
    run.outputs = {{"predictions", gen_out}};
    run.manifest_path = manifest_for_file(gen_out);
    run.result = {{"examples", examples.size()}, {"kind", kind}, {"out", gen_out}};
  });

  // tag-prompt -------------------------------------------------------------
  auto* tpr = app.add_subcommand("tag-prompt", "Tag summaries with a chat model through a prompt variant");
  std::string tpr_in, tpr_out, tpr_variant = "tagging-9", tpr_fixture;
  prompt::BatchOptions tpr_opts;
  tpr->add_option("--in", tpr_in, "Corpus JSONL")->required();
  tpr->add_option("--out", tpr_out, "Predictions JSONL")->required();
  tpr->add_option("--variant", tpr_variant, "tagging-2, -3, -6, -8 or -9")->capture_default_str();
  tpr->add_option("--fixture", tpr_fixture, "Scripted replies: JSON object of dialogue id -> reply(s)")->required();
  tpr->add_option("--retry", tpr_opts.retry_limit, "Re-sends with a format reminder")->capture_default_str();
  tpr->add_option("--concurrency", tpr_opts.concurrency, "Parallel requests")->capture_default_str();
  tpr->callback([&] {
    const auto variant = prompt::parse_variant(tpr_variant);
    const auto examples = load_dataset(tpr_in).examples;
    auto client = prompt::ScriptedClient::from_file(tpr_fixture);
    const auto batch = prompt::run_batch(examples, client, variant, tpr_opts);
    std::vector<proxy::PredictionRecord> records;
    for (const auto& item : batch.items) records.push_back(item.record);
    ensure_parent(tpr_out);
    proxy::save_predictions(tpr_out, records);
    run.config = {{"variant", tpr_variant}, {"retry", tpr_opts.retry_limit}, {"concurrency", tpr_opts.concurrency}};
    run.inputs = {{"dataset", tpr_in}, {"fixture", tpr_fixture}};
    run.outputs = {{"predictions", tpr_out}};
    run.manifest_path = manifest_for_file(tpr_out);
    run.result = {{"examples", examples.size()}, {"validity_rate", batch.validity_rate}};
  });

  // score-tags -------------------------------------------------------------
  auto* st = app.add_subcommand("score-tags", "Span P/R/F1 and accuracy of predicted tags");
  std::string st_gold, st_pred;
  bool st_binary = false;
  st->add_option("--pred", st_pred, "Predictions JSONL (pred_tags) or tagged corpus JSONL")->required();
  st->add_option("--gold", st_gold, "Gold corpus JSONL; defaults to gold_tags in the predictions");
  st->add_flag("--binary", st_binary, "Map every non-O tag to 1 and score label 1");
  st->callback([&] {
    std::vector<std::vector<int>> gold, pred;
    std::size_t skipped = 0;
    std::optional<std::vector<DialogueExample>> gold_examples;
    if (!st_gold.empty()) gold_examples = load_dataset(st_gold).examples;

    std::ifstream probe(st_pred);
    if (!probe) throw IoError("cannot open " + st_pred);
    std::string first;
    std::getline(probe, first);
    const bool records_format = first.find("\"pred_tags\"") != std::string::npos;
    std::vector<std::pair<std::string, std::vector<int>>> predicted;  // dialogue id, labels
    std::vector<std::vector<int>> embedded_gold;
    if (records_format) {
      for (const auto& r : proxy::load_predictions(st_pred)) {
        if (r.valid && !*r.valid) {
          ++skipped;
          predicted.push_back({r.dialogue_id, {}});
        } else {
          predicted.push_back({r.dialogue_id, r.pred_tags});
        }
        embedded_gold.push_back(r.gold_tags);
      }
    } else {
      for (const auto& ex : load_dataset(st_pred).examples) {
        std::vector<int> ids;
        for (Tag t : ex.summary.tags) ids.push_back(base_id(t));
        predicted.push_back({ex.dialogue.id, ids});
      }
    }
    if (gold_examples && gold_examples->size() != predicted.size()) {
      throw LengthMismatch("gold has " + std::to_string(gold_examples->size()) + " examples, predictions have " +
                           std::to_string(predicted.size()));
    }
    if (!gold_examples && !records_format) throw MissingGoldSummary("--gold is required for corpus predictions");
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      if (predicted[i].second.empty()) continue;
      std::vector<int> g;
      if (gold_examples) {
        if ((*gold_examples)[i].dialogue.id != predicted[i].first) {
          throw LengthMismatch("line " + std::to_string(i + 1) + ": dialogue ids differ between gold and predictions");
        }
        for (Tag t : (*gold_examples)[i].summary.tags) g.push_back(base_id(t));
      } else {
        g = embedded_gold[i];
      }
      if (g.size() != predicted[i].second.size()) {
        throw LengthMismatch("line " + std::to_string(i + 1) + ": gold and predicted tag counts differ");
      }
      auto p = predicted[i].second;
      if (st_binary) {
        for (int& v : g) v = v != 0 ? 1 : 0;
        for (int& v : p) v = v != 0 ? 1 : 0;
      }
      for (int v : p) {
        if (v < 0 || v >= static_cast<int>(kNumTags)) throw OutOfRangeTagId("predicted label out of range");
      }
      gold.push_back(std::move(g));
      pred.push_back(std::move(p));
    }
    metrics::PRFReport report;
    if (st_binary) {
      report = metrics::binary_prf(gold, pred);
    } else {
      std::vector<std::string> names;
      for (Tag t : kAllTags) names.emplace_back(tag_code(t));
      report = metrics::span_prf(gold, pred, names);
    }
    run.inputs = {{"pred", st_pred}};
    if (!st_gold.empty()) run.inputs["gold"] = st_gold;
    run.config = {{"binary", st_binary}};
    run.result = prf_json(report);
    run.result["scored"] = gold.size();
    run.result["skipped_invalid"] = skipped;
  });

  // score-rouge ------------------------------------------------------------
  auto* sr = app.add_subcommand("score-rouge", "ROUGE-1/2/L/Lsum F-measures over reference/candidate pairs");
  std::string sr_pairs;
  bool sr_extract = false;
  sr->add_option("--pairs", sr_pairs, "JSONL of {\"reference\": ..., \"candidate\": ...}")->required();
  sr->add_flag("--extract-summary", sr_extract, "Strip Tags/Explanation blocks from candidates first");
  sr->callback([&] {
    std::ifstream in(sr_pairs);
    if (!in) throw IoError("cannot open " + sr_pairs);
    std::vector<metrics::TextPair> pairs;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("reference") || !j["reference"].is_string() ||
          !j.contains("candidate") || !j["candidate"].is_string()) {
        throw SchemaError(n, "each line needs string fields reference and candidate");
      }
      std::string cand = j["candidate"].get<std::string>();
      if (sr_extract) cand = prompt::extract_summary(cand);
      pairs.push_back({j["reference"].get<std::string>(), cand});
    }
    const auto scores = metrics::corpus_rouge(pairs);
    json out = json::object();
    for (const auto& [name, s] : scores) {
      out[name] = {{"precision", s.precision}, {"recall", s.recall}, {"fmeasure", s.fmeasure}};
    }
    run.inputs = {{"pairs", sr_pairs}};
    run.config = {{"extract_summary", sr_extract}};
    run.result = {{"pairs", pairs.size()}, {"scores", out}};
  });

  // serve ------------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "Run the annotation HTTP service");
  std::string sv_journal = "annotations.journal.jsonl", sv_import, sv_host = "127.0.0.1";
  int sv_port = 8080;
  serve->add_option("--journal", sv_journal, "Append-only journal file")->capture_default_str();
  serve->add_option("--import", sv_import, "Corpus JSONL to enqueue as new tasks");
  serve->add_option("--host", sv_host, "Bind address")->capture_default_str();
  serve->add_option("--port", sv_port, "Port (0 picks a free one)")->capture_default_str();
  serve->callback([&] {
    service::AnnotationService svc(sv_journal);
    if (!sv_import.empty()) svc.add_tasks(load_dataset(sv_import).examples);
    service::HttpApi api(svc);
    const int port = api.bind(sv_host, sv_port);
    if (port < 0) throw IoError("cannot bind " + sv_host + ":" + std::to_string(sv_port));
    g_server = &api;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    json ready = {{"host", sv_host}, {"port", port}, {"tasks", svc.size()}};
    if (json_out) {
      std::cout << ready.dump() << std::endl;
    } else {
      std::cout << "serving " << svc.size() << " tasks on http://" << sv_host << ":" << port << std::endl;
    }
    api.serve();
    g_server = nullptr;
    json_out = false;  // the ready line was the output
  });

  // export -----------------------------------------------------------------
  auto* ex = app.add_subcommand("export", "Write done annotation tasks as a corpus JSONL");
  std::string ex_journal = "annotations.journal.jsonl", ex_out;
  ex->add_option("--journal", ex_journal, "Journal file")->capture_default_str();
  ex->add_option("--out", ex_out, "Output corpus JSONL")->required();
  ex->callback([&] {
    if (!fs::exists(ex_journal)) throw IoError("no journal at " + ex_journal);
    service::AnnotationService svc(ex_journal);
    ensure_parent(ex_out);
    std::ofstream out(ex_out, std::ios::trunc);
    if (!out) throw IoError("cannot write " + ex_out);
    svc.export_jsonl(out);
    const auto s = svc.stats();
    run.inputs = {{"journal", ex_journal}};
    run.outputs = {{"dataset", ex_out}};
    run.manifest_path = manifest_for_file(ex_out);
    run.result = {{"exported", s.done}, {"open", s.open}, {"claimed", s.claimed}};
  });

  // Config values are applied after parsing, before the command runs.
  for (auto* sub : app.get_subcommands({})) {
    sub->preparse_callback([&, sub](std::size_t) { run.command = sub->get_name(); });
  }
  app.parse_complete_callback([&] {
    const json config = load_config_file(config_path);
    for (auto* sub : app.get_subcommands()) apply_config(sub, config);
  });

  try {
    app.parse(argc, argv);
    write_manifest(run);
    if (json_out) {
      std::cout << run.result.dump(2) << '\n';
    } else {
      print_human(run.result, "");
    }
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    if (json_out) std::cout << json{{"error", e.kind()}, {"message", e.what()}}.dump() << '\n';
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return is_runtime_error(e) ? 2 : 1;
  } catch (const std::exception& e) {
    if (json_out) std::cout << json{{"error", "RuntimeError"}, {"message", e.what()}}.dump() << '\n';
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
