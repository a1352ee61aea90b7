#include "faithtag/proxy_tagger.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace faithtag::proxy {

using json = nlohmann::json;

std::string_view mode_name(ProxyMode mode) noexcept { return mode == ProxyMode::HS ? "HS" : "GS"; }

ProxyMode parse_mode(std::string_view name) {
  if (name == "HS" || name == "hs") return ProxyMode::HS;
  if (name == "GS" || name == "gs") return ProxyMode::GS;
  throw UnknownVariant("unknown proxy mode '" + std::string(name) + "'");
}

namespace {

// Text never produces the separator; a stray [EOS] outside the summary is
// demoted so the slot stays unique.
std::vector<int> encode_context(const Vocab& vocab, const std::vector<std::string>& tokens) {
  auto ids = vocab.encode(tokens);
  for (int& id : ids) {
    if (id == Vocab::kEosSlot) id = Vocab::kUnk;
  }
  return ids;
}

}  // namespace

ProxyInput assemble_input(const Vocab& vocab, const Dialogue& dialogue, const std::vector<std::string>& summary,
                          const std::optional<std::vector<std::string>>& gold_summary, ProxyMode mode,
                          int max_len) {
  if (summary.empty() || summary.back() != kEosToken) {
    throw InvalidSummary("summary must end with " + std::string(kEosToken));
  }
  if (mode == ProxyMode::GS && !gold_summary) {
    throw MissingGoldSummary("GS input for dialogue '" + dialogue.id + "' has no gold summary");
  }
  auto dialogue_ids = encode_context(vocab, flatten_dialogue(dialogue));
  std::vector<int> gold_ids;
  if (mode == ProxyMode::GS) gold_ids = encode_context(vocab, *gold_summary);
  auto summary_ids = vocab.encode(summary);
  for (std::size_t i = 0; i + 1 < summary_ids.size(); ++i) {
    if (summary_ids[i] == Vocab::kEosSlot) summary_ids[i] = Vocab::kUnk;
  }

  const std::size_t seps = mode == ProxyMode::GS ? 2 : 1;
  const std::size_t budget = static_cast<std::size_t>(std::max(max_len, 0));
  if (summary_ids.size() + seps > budget) {
    throw DimensionMismatch("summary of " + std::to_string(summary_ids.size()) + " tokens does not fit max_len " +
                            std::to_string(max_len));
  }
  auto total = [&] { return dialogue_ids.size() + gold_ids.size() + summary_ids.size() + seps; };
  if (total() > budget) {
    const std::size_t excess = std::min(total() - budget, dialogue_ids.size());
    dialogue_ids.erase(dialogue_ids.begin(), dialogue_ids.begin() + static_cast<std::ptrdiff_t>(excess));
  }
  if (total() > budget) {
    const std::size_t excess = total() - budget;
    gold_ids.erase(gold_ids.begin(), gold_ids.begin() + static_cast<std::ptrdiff_t>(excess));
  }

  ProxyInput in;
  in.mode = mode;
  in.input_ids = dialogue_ids;
  in.input_ids.push_back(Vocab::kSep);
  if (mode == ProxyMode::GS) {
    in.input_ids.insert(in.input_ids.end(), gold_ids.begin(), gold_ids.end());
    in.input_ids.push_back(Vocab::kSep);
  }
  const std::size_t start = in.input_ids.size();
  in.input_ids.insert(in.input_ids.end(), summary_ids.begin(), summary_ids.end());
  in.summary_region = {start, in.input_ids.size()};
  return in;
}

ProxyInput assemble_input(const Vocab& vocab, const DialogueExample& example, ProxyMode mode, int max_len) {
  return assemble_input(vocab, example.dialogue, example.summary.tokens, example.gold_summary, mode, max_len);
}

ProxyParts disassemble(const ProxyInput& input) {
  const auto& ids = input.input_ids;
  std::vector<std::size_t> seps;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == Vocab::kSep) seps.push_back(i);
  }
  const std::size_t expected = input.mode == ProxyMode::GS ? 2 : 1;
  if (seps.size() != expected || ids.empty() || ids.back() != Vocab::kEosSlot) {
    throw DimensionMismatch("input ids do not follow the " + std::string(mode_name(input.mode)) + " layout");
  }
  ProxyParts parts;
  parts.dialogue.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(seps[0]));
  if (input.mode == ProxyMode::GS) {
    parts.gold = std::vector<int>(ids.begin() + static_cast<std::ptrdiff_t>(seps[0] + 1),
                                  ids.begin() + static_cast<std::ptrdiff_t>(seps[1]));
  }
  parts.summary.assign(ids.begin() + static_cast<std::ptrdiff_t>(seps.back() + 1), ids.end());
  return parts;
}

std::vector<int> position_targets(const ProxyInput& input, const TaggedSummary& summary, LabelSpace space) {
  const auto [start, end] = input.summary_region;
  if (end - start != summary.tags.size()) {
    throw LengthMismatch("summary region has " + std::to_string(end - start) + " positions, tags have " +
                         std::to_string(summary.tags.size()));
  }
  std::vector<int> targets(input.input_ids.size(), 0);
  const std::vector<int> labels =
      space == LabelSpace::Binary ? binarize_tags(summary.tags) : [&] {
        std::vector<int> out;
        for (Tag t : summary.tags) out.push_back(base_id(t));
        return out;
      }();
  std::copy(labels.begin(), labels.end(), targets.begin() + static_cast<std::ptrdiff_t>(start));
  return targets;
}

void ProxyTrainConfig::validate() const {
  if (!(learning_rate > 0) || batch_size <= 0 || epochs <= 0 || weight_decay < 0 || dims.d_model <= 0 ||
      dims.heads <= 0 || dims.encoder_layers <= 0 || dims.d_ff <= 0 || dims.max_len <= 1) {
    throw DimensionMismatch("proxy training configuration has a non-positive value");
  }
  if (best_model_metric != "f1" && best_model_metric != "accuracy") {
    throw UnknownVariant("best_model_metric must be f1 or accuracy");
  }
}

// ---------------------------------------------------------------------------

template <typename Scalar>
ProxyModel<Scalar>::ProxyModel(Vocab vocab, nn::TransformerDims dims, LabelSpace space, ProxyMode mode,
                               std::uint64_t seed)
    : vocab_(std::move(vocab)), dims_(dims), space_(space), mode_(mode) {
  nn::Rng rng(seed);
  tokens_ = nn::Embedding<Scalar>("embed.tokens", static_cast<Eigen::Index>(vocab_.size()), dims.d_model, rng);
  encoder_ = nn::EncoderStack<Scalar>("encoder", dims, rng);
  classifier_ = nn::Linear<Scalar>("classifier", dims.d_model, label_count(space), rng);
}

template <typename Scalar>
Matrix<Scalar> ProxyModel<Scalar>::forward(std::span<const int> ids, Cache& cache) const {
  if (!loaded()) throw ModelNotTrained("proxy model has no parameters");
  cache.ids.assign(ids.begin(), ids.end());
  cache.hidden = encoder_.forward(tokens_.forward(ids), cache.encoder);
  return classifier_.forward(cache.hidden);
}

template <typename Scalar>
Matrix<Scalar> ProxyModel<Scalar>::logits(std::span<const int> ids) const {
  Cache cache;
  return forward(ids, cache);
}

template <typename Scalar>
void ProxyModel<Scalar>::backward(const Cache& cache, const Matrix<Scalar>& dlogits) {
  Matrix<Scalar> dhidden = classifier_.backward(cache.hidden, dlogits);
  tokens_.backward(cache.ids, encoder_.backward(cache.encoder, dhidden));
}

template <typename Scalar>
nn::ParameterRefs<Scalar> ProxyModel<Scalar>::parameters() {
  nn::ParameterRefs<Scalar> out;
  tokens_.collect(out);
  encoder_.collect(out);
  classifier_.collect(out);
  return out;
}

template <typename Scalar>
std::size_t ProxyModel<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<ProxyModel*>(this)->parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template class ProxyModel<double>;
template class ProxyModel<float>;

// ---------------------------------------------------------------------------

template <typename Scalar>
std::vector<int> predict_labels(const ProxyModel<Scalar>& model, const ProxyInput& input) {
  if (!model.loaded()) throw ModelNotTrained("proxy model has no parameters");
  const Matrix<Scalar> logits = model.logits(input.input_ids);
  const auto [start, end] = input.summary_region;
  std::vector<int> out;
  out.reserve(end - start);
  for (std::size_t i = start; i < end; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    if (model.label_space() == LabelSpace::Binary) {
      out.push_back(logits(row, 1) > logits(row, 0) ? 1 : 0);
      continue;
    }
    int best = 0;
    if (i + 1 == end) {
      best = logits(row, base_id(Tag::M)) > logits(row, 0) ? base_id(Tag::M) : 0;
    } else {
      for (int c = 1; c < base_id(Tag::M); ++c) {
        if (logits(row, c) > logits(row, best)) best = c;
      }
    }
    out.push_back(best);
  }
  return out;
}

template <typename Scalar>
std::vector<Tag> predict_tags(const ProxyModel<Scalar>& model, const ProxyInput& input) {
  if (model.label_space() == LabelSpace::Binary) {
    throw UnknownVariant("binary proxy model predicts 0/1 labels, not tags");
  }
  std::vector<Tag> tags;
  for (int id : predict_labels(model, input)) tags.push_back(tag_from_base_id(id));
  return tags;
}

template <typename Scalar>
metrics::PRFReport evaluate_proxy(const ProxyModel<Scalar>& model, const std::vector<DialogueExample>& examples) {
  std::vector<std::vector<int>> gold, pred;
  for (const auto& ex : examples) {
    const auto input = assemble_input(model.vocab(), ex, model.mode(), model.dims().max_len);
    pred.push_back(predict_labels(model, input));
    if (model.label_space() == LabelSpace::Binary) {
      gold.push_back(binarize_tags(ex.summary.tags));
    } else {
      std::vector<int> g;
      for (Tag t : ex.summary.tags) g.push_back(base_id(t));
      gold.push_back(std::move(g));
    }
  }
  if (model.label_space() == LabelSpace::Binary) return metrics::binary_prf(gold, pred);
  std::vector<std::string> names;
  for (Tag t : kAllTags) names.emplace_back(tag_code(t));
  return metrics::span_prf(gold, pred, names);
}

namespace {

bool better(const metrics::PRFReport& a, const metrics::PRFReport& b, const std::string& metric) {
  if (metric == "accuracy") {
    return a.accuracy > b.accuracy || (a.accuracy == b.accuracy && a.f1 > b.f1);
  }
  return a.f1 > b.f1 || (a.f1 == b.f1 && a.accuracy > b.accuracy);
}

}  // namespace

template <typename Scalar>
ProxyTrainResult<Scalar> train_proxy(const std::vector<DialogueExample>& train,
                                     const std::vector<DialogueExample>& validation, const ProxyTrainConfig& config,
                                     const ProxyEpochCallback& on_epoch) {
  if (train.empty()) throw EmptyDataset("no training examples");
  config.validate();
  const auto& held_out = validation.empty() ? train : validation;

  ProxyModel<Scalar> model(Vocab::build(train), config.dims, config.label_space, config.mode, config.seed);
  std::vector<ProxyInput> inputs;
  std::vector<std::vector<int>> targets;
  for (const auto& ex : train) {
    inputs.push_back(assemble_input(model.vocab(), ex, config.mode, config.dims.max_len));
    targets.push_back(position_targets(inputs.back(), ex.summary, config.label_space));
  }

  auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  nn::AdamW<Scalar> optimizer(params, {config.learning_rate, config.weight_decay});

  ProxyTrainResult<Scalar> result;
  std::optional<metrics::PRFReport> best;
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  nn::Rng rng(config.seed);
  typename ProxyModel<Scalar>::Cache cache;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double epoch_loss = 0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::size_t positions = 0;
      for (std::size_t k = start; k < stop; ++k) positions += targets[order[k]].size();
      const Scalar scale = Scalar(1) / static_cast<Scalar>(positions);
      optimizer.zero_grad();
      double step_loss = 0;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& ids = inputs[order[k]].input_ids;
        const auto& tgt = targets[order[k]];
        Matrix<Scalar> logits = model.forward(ids, cache);
        Matrix<Scalar> grad(logits.rows(), logits.cols());
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
          const Scalar mx = logits.row(r).maxCoeff();
          const Scalar lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
          const int t = tgt[static_cast<std::size_t>(r)];
          step_loss += static_cast<double>((lse - logits(r, t)) * scale);
          grad.row(r) = ((logits.row(r).array() - lse).exp() * scale).matrix();
          grad(r, t) -= scale;
        }
        model.backward(cache, grad);
      }
      optimizer.step();
      result.step_losses.push_back(step_loss);
      epoch_loss += step_loss;
      ++epoch_steps;
    }

    EpochReport report;
    report.epoch = epoch;
    report.train_loss = epoch_loss / static_cast<double>(epoch_steps);
    report.validation = evaluate_proxy(model, held_out);
    if (!best || better(report.validation, *best, config.best_model_metric)) {
      best = report.validation;
      result.model = model;
      result.best_epoch = epoch;
    }
    result.epochs.push_back(report);
    if (on_epoch) on_epoch(report);
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string prediction_to_jsonl(const PredictionRecord& r) {
  json j;
  j["dialogue_id"] = r.dialogue_id;
  j["tokens"] = r.tokens;
  j["pred_tags"] = r.pred_tags;
  j["gold_tags"] = r.gold_tags;
  if (r.valid) j["valid"] = *r.valid;
  if (r.valid || r.failure_reason) j["failure_reason"] = r.failure_reason ? json(*r.failure_reason) : json(nullptr);
  return j.dump();
}

PredictionRecord prediction_from_jsonl(const std::string& line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(line_number, std::string("invalid JSON: ") + e.what());
  }
  auto ints = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array()) throw SchemaError(line_number, std::string(key) + " must be an array");
    std::vector<int> out;
    for (const auto& v : j[key]) {
      if (!v.is_number_integer()) throw SchemaError(line_number, std::string(key) + " must contain integers");
      out.push_back(v.get<int>());
    }
    return out;
  };
  if (!j.is_object() || !j.contains("dialogue_id") || !j["dialogue_id"].is_string()) {
    throw SchemaError(line_number, "dialogue_id must be a string");
  }
  PredictionRecord r;
  r.dialogue_id = j["dialogue_id"].get<std::string>();
  r.pred_tags = ints("pred_tags");
  r.gold_tags = ints("gold_tags");
  if (j.contains("tokens") && j["tokens"].is_array()) r.tokens = j["tokens"].get<std::vector<std::string>>();
  if (j.contains("valid") && j["valid"].is_boolean()) r.valid = j["valid"].get<bool>();
  if (j.contains("failure_reason") && j["failure_reason"].is_string()) {
    r.failure_reason = j["failure_reason"].get<std::string>();
  }
  return r;
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    out.push_back(prediction_from_jsonl(line, n));
  }
  return out;
}

void save_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : records) out << prediction_to_jsonl(r) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

template <typename Scalar>
std::vector<PredictionRecord> predict_dataset(const ProxyModel<Scalar>& model,
                                              const std::vector<DialogueExample>& examples) {
  std::vector<PredictionRecord> out;
  for (const auto& ex : examples) {
    PredictionRecord r;
    r.dialogue_id = ex.dialogue.id;
    r.tokens = ex.summary.tokens;
    r.pred_tags = predict_labels(model, assemble_input(model.vocab(), ex, model.mode(), model.dims().max_len));
    if (model.label_space() == LabelSpace::Binary) {
      r.gold_tags = binarize_tags(ex.summary.tags);
    } else {
      for (Tag t : ex.summary.tags) r.gold_tags.push_back(base_id(t));
    }
    out.push_back(std::move(r));
  }
  return out;
}

#define FAITHTAG_INSTANTIATE(Scalar)                                                                           \
  template std::vector<int> predict_labels<Scalar>(const ProxyModel<Scalar>&, const ProxyInput&);             \
  template std::vector<Tag> predict_tags<Scalar>(const ProxyModel<Scalar>&, const ProxyInput&);               \
  template metrics::PRFReport evaluate_proxy<Scalar>(const ProxyModel<Scalar>&,                               \
                                                     const std::vector<DialogueExample>&);                    \
  template ProxyTrainResult<Scalar> train_proxy<Scalar>(const std::vector<DialogueExample>&,                   \
                                                        const std::vector<DialogueExample>&,                  \
                                                        const ProxyTrainConfig&, const ProxyEpochCallback&);  \
  template std::vector<PredictionRecord> predict_dataset<Scalar>(const ProxyModel<Scalar>&,                   \
                                                                 const std::vector<DialogueExample>&);

FAITHTAG_INSTANTIATE(double)
FAITHTAG_INSTANTIATE(float)

#undef FAITHTAG_INSTANTIATE

}  // namespace faithtag::proxy
