#include "faithtag/joint_model.hpp"

#include <algorithm>
#include <numeric>

namespace faithtag::joint {

int shift_tag_id(int base_id) {
  if (base_id < 0 || base_id >= static_cast<int>(kNumTags)) {
    throw OutOfRangeTagId("base tag id " + std::to_string(base_id) + " outside 0..5");
  }
  return base_id + kTagShift;
}

int unshift_tag_id(int shifted_id) {
  if (shifted_id < kTagShift || shifted_id >= kTagClasses) {
    throw OutOfRangeTagId("shifted tag id " + std::to_string(shifted_id) + " outside 3..8");
  }
  return shifted_id - kTagShift;
}

std::vector<int> shift_tags(std::span<const int> base_ids) {
  std::vector<int> out;
  out.reserve(base_ids.size());
  for (int b : base_ids) out.push_back(shift_tag_id(b));
  return out;
}

std::vector<int> unshift_tags(std::span<const int> shifted_ids) {
  std::vector<int> out;
  out.reserve(shifted_ids.size());
  for (int s : shifted_ids) out.push_back(unshift_tag_id(s));
  return out;
}

std::vector<bool> special_token_mask(std::span<const int> token_ids) {
  std::vector<bool> mask(token_ids.size());
  for (std::size_t i = 0; i < token_ids.size(); ++i) mask[i] = !Vocab::is_special(token_ids[i]);
  return mask;
}

// ---------------------------------------------------------------------------

namespace {

/// Sum of -log softmax(logits)[target] over selected rows; writes
/// (softmax - onehot) * scale into `grad` when given.
template <typename Scalar>
Scalar cross_entropy_sum(const Matrix<Scalar>& logits, std::span<const int> targets,
                         const std::vector<bool>& include, Scalar scale, Matrix<Scalar>* grad) {
  if (grad) grad->setZero(logits.rows(), logits.cols());
  Scalar total = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (!include[static_cast<std::size_t>(r)]) continue;
    const int target = targets[static_cast<std::size_t>(r)];
    const Scalar mx = logits.row(r).maxCoeff();
    const Scalar lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    total += lse - logits(r, target);
    if (grad) {
      grad->row(r) = ((logits.row(r).array() - lse).exp() * scale).matrix();
      (*grad)(r, target) -= scale;
    }
  }
  return total;
}

template <typename Scalar>
void check_tag_targets(std::span<const int> targets, const std::vector<bool>& mask) {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (mask[i] && (targets[i] < kTagShift || targets[i] >= kTagClasses)) {
      throw OutOfRangeTagId("tag target " + std::to_string(targets[i]) + " at position " +
                            std::to_string(i) + " outside 3..8");
    }
  }
}

}  // namespace

template <typename Scalar>
Scalar tag_loss(const Matrix<Scalar>& tag_logits, std::span<const int> target_tags_shifted,
                const std::vector<bool>& mask, Matrix<Scalar>* dtag_logits, std::size_t normalizer) {
  const auto n = static_cast<std::size_t>(tag_logits.rows());
  if (tag_logits.cols() != kTagClasses || target_tags_shifted.size() != n || mask.size() != n) {
    throw DimensionMismatch("tag_loss: inconsistent shapes");
  }
  const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (normalizer == 0) normalizer = count;
  if (normalizer == 0) throw NoValidPositions("tag mask selects no positions");
  check_tag_targets<Scalar>(target_tags_shifted, mask);
  const Scalar scale = Scalar(1) / static_cast<Scalar>(normalizer);
  return cross_entropy_sum(tag_logits, target_tags_shifted, mask, scale, dtag_logits) * scale;
}

template <typename Scalar>
JointLoss<Scalar> joint_loss(const Matrix<Scalar>& token_logits, const Matrix<Scalar>& tag_logits,
                             std::span<const int> target_tokens, std::span<const int> target_tags_shifted,
                             const std::vector<bool>& mask, Scalar lambda_tag, LossGradients<Scalar>* gradients,
                             const LossNormalizers* normalizers) {
  const auto n = static_cast<std::size_t>(token_logits.rows());
  if (static_cast<std::size_t>(tag_logits.rows()) != n || target_tokens.size() != n ||
      target_tags_shifted.size() != n || mask.size() != n) {
    throw DimensionMismatch("joint_loss: sequence lengths disagree");
  }
  if (tag_logits.cols() != kTagClasses) {
    throw DimensionMismatch("joint_loss: tag logits need " + std::to_string(kTagClasses) + " columns");
  }
  JointLoss<Scalar> loss;
  std::vector<bool> token_include(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (target_tokens[i] < 0 || target_tokens[i] >= token_logits.cols()) {
      throw DimensionMismatch("joint_loss: target token out of vocabulary range");
    }
    token_include[i] = target_tokens[i] != Vocab::kPad;
    loss.token_positions += token_include[i] ? 1 : 0;
    loss.tag_positions += mask[i] ? 1 : 0;
  }
  if (loss.tag_positions == 0 && (!normalizers || normalizers->tag_positions == 0)) {
    throw NoValidPositions("tag mask selects no positions");
  }
  check_tag_targets<Scalar>(target_tags_shifted, mask);

  const std::size_t token_norm = normalizers ? normalizers->token_positions : loss.token_positions;
  const std::size_t tag_norm = normalizers ? normalizers->tag_positions : loss.tag_positions;
  const Scalar token_scale = token_norm ? Scalar(1) / static_cast<Scalar>(token_norm) : Scalar(0);
  const Scalar tag_scale = Scalar(1) / static_cast<Scalar>(tag_norm);

  loss.token = cross_entropy_sum(token_logits, target_tokens, token_include, token_scale,
                                 gradients ? &gradients->token_logits : nullptr) *
               token_scale;
  loss.tag = cross_entropy_sum(tag_logits, target_tags_shifted, mask, tag_scale * lambda_tag,
                               gradients ? &gradients->tag_logits : nullptr) *
             tag_scale;
  loss.joint = loss.token + lambda_tag * loss.tag;
  return loss;
}

// ---------------------------------------------------------------------------

std::vector<int> encode_source(const Vocab& vocab, const Dialogue& dialogue, int max_len) {
  auto ids = vocab.encode(flatten_dialogue(dialogue));
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  if (static_cast<int>(ids.size()) > max_len) {
    ids.erase(ids.begin(), ids.end() - max_len);
  }
  return ids;
}

JointSequence make_sequence(const Vocab& vocab, const DialogueExample& example, int max_len) {
  validate_summary(example.summary);
  JointSequence seq;
  seq.source = encode_source(vocab, example.dialogue, max_len);
  auto ids = vocab.encode(example.summary.tokens);
  if (static_cast<int>(ids.size()) + 1 > max_len) {
    throw DimensionMismatch("summary of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                            std::to_string(max_len));
  }
  seq.decoder_input.push_back(Vocab::kBos);
  seq.decoder_input.insert(seq.decoder_input.end(), ids.begin(), ids.end());
  seq.target_tokens = ids;
  seq.target_tokens.push_back(Vocab::kEos);
  seq.mask = special_token_mask(seq.target_tokens);
  seq.target_tags.assign(seq.target_tokens.size(), -1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (seq.mask[i]) seq.target_tags[i] = shifted_id(example.summary.tags[i]);
  }
  return seq;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
JointModel<Scalar>::JointModel(Vocab vocab, nn::TransformerDims dims, std::uint64_t seed)
    : vocab_(std::move(vocab)), dims_(dims) {
  nn::Rng rng(seed);
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  tokens_ = nn::Embedding<Scalar>("embed.tokens", v, dims.d_model, rng);
  encoder_ = nn::EncoderStack<Scalar>("encoder", dims, rng);
  decoder_ = nn::DecoderStack<Scalar>("decoder", dims, rng);
  heads_ = DualHead<Scalar>(dims.d_model, v, rng);
}

template <typename Scalar>
Matrix<Scalar> JointModel<Scalar>::encode(std::span<const int> source) const {
  typename nn::EncoderStack<Scalar>::Cache cache;
  return encoder_.forward(tokens_.forward(source), cache);
}

template <typename Scalar>
typename JointModel<Scalar>::Output JointModel<Scalar>::decode(const Matrix<Scalar>& memory,
                                                               std::span<const int> decoder_input) const {
  typename nn::DecoderStack<Scalar>::Cache cache;
  Output out;
  out.hidden = decoder_.forward(tokens_.forward(decoder_input), memory, cache);
  out.token_logits = heads_.token_head.forward(out.hidden);
  out.tag_logits = heads_.tag_head.forward(out.hidden);
  return out;
}

template <typename Scalar>
typename JointModel<Scalar>::Output JointModel<Scalar>::forward(std::span<const int> source,
                                                                std::span<const int> decoder_input,
                                                                Cache& cache) const {
  if (!loaded()) throw ModelNotTrained("joint model has no parameters");
  cache.source.assign(source.begin(), source.end());
  cache.decoder_input.assign(decoder_input.begin(), decoder_input.end());
  cache.memory = encoder_.forward(tokens_.forward(source), cache.encoder);
  Output out;
  out.hidden = decoder_.forward(tokens_.forward(decoder_input), cache.memory, cache.decoder);
  out.token_logits = heads_.token_head.forward(out.hidden);
  out.tag_logits = heads_.tag_head.forward(out.hidden);
  cache.hidden = out.hidden;
  return out;
}

template <typename Scalar>
void JointModel<Scalar>::backward(const Cache& cache, const Matrix<Scalar>& dtoken_logits,
                                  const Matrix<Scalar>& dtag_logits, bool heads_only) {
  const bool has_token = dtoken_logits.size() > 0;
  if (heads_only) {
    if (has_token) heads_.token_head.backward_params(cache.hidden, dtoken_logits);
    heads_.tag_head.backward_params(cache.hidden, dtag_logits);
    return;
  }
  Matrix<Scalar> dhidden = heads_.tag_head.backward(cache.hidden, dtag_logits);
  if (has_token) dhidden += heads_.token_head.backward(cache.hidden, dtoken_logits);
  Matrix<Scalar> dmemory = Matrix<Scalar>::Zero(cache.memory.rows(), cache.memory.cols());
  Matrix<Scalar> ddecoder = decoder_.backward(cache.decoder, dhidden, dmemory);
  tokens_.backward(cache.decoder_input, ddecoder);
  Matrix<Scalar> dsource = encoder_.backward(cache.encoder, dmemory);
  tokens_.backward(cache.source, dsource);
}

template <typename Scalar>
nn::ParameterRefs<Scalar> JointModel<Scalar>::parameters() {
  nn::ParameterRefs<Scalar> out;
  tokens_.collect(out);
  encoder_.collect(out);
  decoder_.collect(out);
  heads_.collect(out);
  return out;
}

template <typename Scalar>
nn::ParameterRefs<Scalar> JointModel<Scalar>::head_parameters() {
  nn::ParameterRefs<Scalar> out;
  heads_.tag_head.collect(out);
  return out;
}

template <typename Scalar>
nn::ParameterRefs<Scalar> JointModel<Scalar>::decoder_parameters() {
  nn::ParameterRefs<Scalar> out;
  decoder_.collect(out);
  return out;
}

template <typename Scalar>
std::size_t JointModel<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<JointModel*>(this)->parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

template class JointModel<double>;
template class JointModel<float>;

// ---------------------------------------------------------------------------

void JointTrainConfig::validate() const {
  if (!(learning_rate > 0) || train_batch <= 0 || eval_batch <= 0 || weight_decay < 0 || epochs <= 0 ||
      !(lambda_tag >= 0) || phase1_epochs <= 0 || phase1_batch <= 0 || dims.d_model <= 0 ||
      dims.heads <= 0 || dims.encoder_layers <= 0 || dims.decoder_layers <= 0 || dims.d_ff <= 0 ||
      dims.max_len <= 1) {
    throw DimensionMismatch("joint training configuration has a non-positive value");
  }
}

template <typename Scalar>
JointModel<Scalar> make_joint_model(const std::vector<DialogueExample>& examples, const JointTrainConfig& config) {
  if (examples.empty()) throw EmptyDataset("no examples to build a vocabulary from");
  config.validate();
  return JointModel<Scalar>(Vocab::build(examples), config.dims, config.seed);
}

namespace {

enum class Phase { ClassifierOnly, Joint };

std::vector<JointSequence> make_sequences(const Vocab& vocab, const std::vector<DialogueExample>& examples,
                                          int max_len) {
  std::vector<JointSequence> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(make_sequence(vocab, ex, max_len));
  return out;
}

LossNormalizers count_positions(const std::vector<JointSequence>& seqs, std::span<const std::size_t> which) {
  LossNormalizers n;
  for (auto i : which) {
    for (std::size_t p = 0; p < seqs[i].target_tokens.size(); ++p) {
      n.token_positions += seqs[i].target_tokens[p] != Vocab::kPad ? 1 : 0;
      n.tag_positions += seqs[i].mask[p] ? 1 : 0;
    }
  }
  return n;
}

double objective(Phase phase, const LossRecord& r) {
  return phase == Phase::ClassifierOnly ? r.tag_loss : r.joint_loss;
}

template <typename Scalar>
LossRecord evaluate_sequences(const JointModel<Scalar>& model, const std::vector<JointSequence>& seqs,
                              double lambda_tag) {
  std::vector<std::size_t> all(seqs.size());
  std::iota(all.begin(), all.end(), 0);
  const auto norms = count_positions(seqs, all);
  LossRecord rec;
  typename JointModel<Scalar>::Cache cache;
  for (const auto& s : seqs) {
    auto out = model.forward(s.source, s.decoder_input, cache);
    auto l = joint_loss<Scalar>(out.token_logits, out.tag_logits, s.target_tokens, s.target_tags, s.mask,
                                static_cast<Scalar>(lambda_tag), nullptr, &norms);
    rec.token_loss += static_cast<double>(l.token);
    rec.tag_loss += static_cast<double>(l.tag);
  }
  rec.joint_loss = rec.token_loss + lambda_tag * rec.tag_loss;
  return rec;
}

template <typename Scalar>
TrainResult run_training(JointModel<Scalar>& model, const std::vector<DialogueExample>& examples,
                         const JointTrainConfig& config, Phase phase, const EpochCallback& on_epoch) {
  if (examples.empty()) throw EmptyDataset("no training examples");
  if (!model.loaded()) throw ModelNotTrained("joint model has no parameters");
  config.validate();

  const auto seqs = make_sequences(model.vocab(), examples, model.dims().max_len);
  const bool classifier_only = phase == Phase::ClassifierOnly;
  const bool heads_only = classifier_only && !config.phase1_unfreeze_decoder;
  const int epochs = classifier_only ? config.phase1_epochs : config.epochs;
  const auto batch = static_cast<std::size_t>(classifier_only ? config.phase1_batch : config.train_batch);
  const Scalar lambda = static_cast<Scalar>(config.lambda_tag);

  nn::ParameterRefs<Scalar> trainable;
  if (classifier_only) {
    trainable = model.head_parameters();
    if (config.phase1_unfreeze_decoder) {
      auto dec = model.decoder_parameters();
      trainable.insert(trainable.end(), dec.begin(), dec.end());
    }
  } else {
    trainable = model.parameters();
  }
  nn::AdamW<Scalar> optimizer(trainable, {config.learning_rate, config.weight_decay});
  for (auto* p : model.parameters()) p->zero_grad();

  TrainResult result;
  result.initial_loss = objective(phase, evaluate_sequences(model, seqs, config.lambda_tag));

  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  nn::Rng rng(config.seed);
  typename JointModel<Scalar>::Cache cache;
  LossGradients<Scalar> grads;
  Matrix<Scalar> no_token_grad;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto members = std::span<const std::size_t>(order).subspan(start, std::min(batch, order.size() - start));
      const auto norms = count_positions(seqs, members);
      optimizer.zero_grad();
      LossRecord rec;
      rec.step = optimizer.steps() + 1;
      for (auto idx : members) {
        const auto& s = seqs[idx];
        auto out = model.forward(s.source, s.decoder_input, cache);
        if (classifier_only) {
          auto l = joint_loss<Scalar>(out.token_logits, out.tag_logits, s.target_tokens, s.target_tags, s.mask,
                                      Scalar(1), nullptr, &norms);
          rec.token_loss += static_cast<double>(l.token);
          rec.tag_loss += static_cast<double>(
              tag_loss<Scalar>(out.tag_logits, s.target_tags, s.mask, &grads.tag_logits, norms.tag_positions));
          model.backward(cache, no_token_grad, grads.tag_logits, heads_only);
        } else {
          auto l = joint_loss<Scalar>(out.token_logits, out.tag_logits, s.target_tokens, s.target_tags, s.mask,
                                      lambda, &grads, &norms);
          rec.token_loss += static_cast<double>(l.token);
          rec.tag_loss += static_cast<double>(l.tag);
          model.backward(cache, grads.token_logits, grads.tag_logits, false);
        }
      }
      rec.joint_loss = rec.token_loss + config.lambda_tag * rec.tag_loss;
      optimizer.step();
      result.steps.push_back(rec);
    }
    const double loss = objective(phase, evaluate_sequences(model, seqs, config.lambda_tag));
    result.epoch_losses.push_back(loss);
    if (on_epoch) on_epoch(epoch, loss);
  }
  return result;
}

}  // namespace

template <typename Scalar>
TrainResult train_phase1(JointModel<Scalar>& model, const std::vector<DialogueExample>& examples,
                         const JointTrainConfig& config, const EpochCallback& on_epoch) {
  return run_training(model, examples, config, Phase::ClassifierOnly, on_epoch);
}

template <typename Scalar>
TrainResult train_phase2(JointModel<Scalar>& model, const std::vector<DialogueExample>& examples,
                         const JointTrainConfig& config, const EpochCallback& on_epoch) {
  return run_training(model, examples, config, Phase::Joint, on_epoch);
}

template <typename Scalar>
LossRecord evaluate_loss(const JointModel<Scalar>& model, const std::vector<DialogueExample>& examples,
                         double lambda_tag) {
  if (examples.empty()) throw EmptyDataset("no examples to evaluate");
  return evaluate_sequences(model, make_sequences(model.vocab(), examples, model.dims().max_len), lambda_tag);
}

namespace {

template <typename Scalar>
int restricted_argmax(const Eigen::Ref<const nn::RowVector<Scalar>>& row, std::initializer_list<int> allowed) {
  int best = *allowed.begin();
  for (int c : allowed) {
    if (row(c) > row(best)) best = c;
  }
  return best;
}

constexpr std::initializer_list<int> kInteriorTags = {3, 4, 5, 6, 7};  // O W OB C N
constexpr std::initializer_list<int> kFinalTags = {3, 8};               // O M

}  // namespace

template <typename Scalar>
double teacher_forced_tag_accuracy(const JointModel<Scalar>& model, const std::vector<DialogueExample>& examples) {
  std::size_t correct = 0, total = 0;
  typename JointModel<Scalar>::Cache cache;
  for (const auto& ex : examples) {
    auto s = make_sequence(model.vocab(), ex, model.dims().max_len);
    auto out = model.forward(s.source, s.decoder_input, cache);
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      if (!s.mask[i]) continue;
      const bool final_slot = s.target_tokens[i] == Vocab::kEosSlot;
      nn::RowVector<Scalar> row = out.tag_logits.row(static_cast<Eigen::Index>(i));
      const int pred = restricted_argmax<Scalar>(row, final_slot ? kFinalTags : kInteriorTags);
      correct += pred == s.target_tags[i] ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

template <typename Scalar>
Generation generate_with_tags(const JointModel<Scalar>& model, std::span<const int> source, int max_len) {
  if (!model.loaded()) throw ModelNotTrained("joint model has no parameters");
  if (max_len < 1) throw DimensionMismatch("max_len must be at least 1");
  const int cap = std::min(max_len, model.dims().max_len);
  const auto memory = model.encode(source);
  const auto& vocab = model.vocab();

  Generation gen;
  std::vector<int> decoder_input = {Vocab::kBos};
  for (int t = 0; t < cap; ++t) {
    auto out = model.decode(memory, decoder_input);
    const auto last = out.token_logits.rows() - 1;
    int best = -1;
    for (Eigen::Index v = 0; v < out.token_logits.cols(); ++v) {
      const int id = static_cast<int>(v);
      if (id == Vocab::kBos || id == Vocab::kPad || id == Vocab::kSep) continue;
      if (best < 0 || out.token_logits(last, v) > out.token_logits(last, best)) best = id;
    }
    nn::RowVector<Scalar> tag_row = out.tag_logits.row(last);
    const bool final_slot = best == Vocab::kEos || best == Vocab::kEosSlot || t == cap - 1;
    if (final_slot) {
      gen.token_ids.push_back(Vocab::kEosSlot);
      gen.tokens.emplace_back(kEosToken);
      gen.tags.push_back(tag_from_base_id(unshift_tag_id(restricted_argmax<Scalar>(tag_row, kFinalTags))));
      break;
    }
    gen.token_ids.push_back(best);
    gen.tokens.push_back(vocab.token(best));
    gen.tags.push_back(tag_from_base_id(unshift_tag_id(restricted_argmax<Scalar>(tag_row, kInteriorTags))));
    decoder_input.push_back(best);
  }
  return gen;
}

template <typename Scalar>
Generation generate_with_tags(const JointModel<Scalar>& model, const Dialogue& dialogue, int max_len) {
  if (!model.loaded()) throw ModelNotTrained("joint model has no parameters");
  return generate_with_tags(model, encode_source(model.vocab(), dialogue, model.dims().max_len), max_len);
}

#define FAITHTAG_INSTANTIATE(Scalar)                                                                         \
  template Scalar tag_loss<Scalar>(const Matrix<Scalar>&, std::span<const int>, const std::vector<bool>&,    \
                                   Matrix<Scalar>*, std::size_t);                                            \
  template JointLoss<Scalar> joint_loss<Scalar>(const Matrix<Scalar>&, const Matrix<Scalar>&,                \
                                                std::span<const int>, std::span<const int>,                  \
                                                const std::vector<bool>&, Scalar, LossGradients<Scalar>*,    \
                                                const LossNormalizers*);                                     \
  template JointModel<Scalar> make_joint_model<Scalar>(const std::vector<DialogueExample>&,                  \
                                                       const JointTrainConfig&);                             \
  template TrainResult train_phase1<Scalar>(JointModel<Scalar>&, const std::vector<DialogueExample>&,        \
                                            const JointTrainConfig&, const EpochCallback&);                  \
  template TrainResult train_phase2<Scalar>(JointModel<Scalar>&, const std::vector<DialogueExample>&,        \
                                            const JointTrainConfig&, const EpochCallback&);                  \
  template LossRecord evaluate_loss<Scalar>(const JointModel<Scalar>&, const std::vector<DialogueExample>&,  \
                                            double);                                                         \
  template double teacher_forced_tag_accuracy<Scalar>(const JointModel<Scalar>&,                            \
                                                      const std::vector<DialogueExample>&);                  \
  template Generation generate_with_tags<Scalar>(const JointModel<Scalar>&, std::span<const int>, int);     \
  template Generation generate_with_tags<Scalar>(const JointModel<Scalar>&, const Dialogue&, int);

FAITHTAG_INSTANTIATE(double)
FAITHTAG_INSTANTIATE(float)

#undef FAITHTAG_INSTANTIATE

}  // namespace faithtag::joint
