#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "faithtag/corpus.hpp"
#include "faithtag/nn/optim.hpp"
#include "faithtag/nn/transformer.hpp"
#include "faithtag/vocab.hpp"

namespace faithtag::joint {

using nn::Matrix;
using nn::Vector;

// ---------------------------------------------------------------------------
// Tag id space. Base ids 0-5 move to 3-8 so they never coincide with the
// control ids 0-2; the classifier therefore has 9 outputs.

inline constexpr int kTagShift = 3;
inline constexpr int kTagClasses = 9;

int shift_tag_id(int base_id);
int unshift_tag_id(int shifted_id);
std::vector<int> shift_tags(std::span<const int> base_ids);
std::vector<int> unshift_tags(std::span<const int> shifted_ids);
inline int shifted_id(Tag tag) { return shift_tag_id(base_id(tag)); }

/// true where the id is not a control symbol (BOS, PAD, EOS, SEP).
std::vector<bool> special_token_mask(std::span<const int> token_ids);

// ---------------------------------------------------------------------------
// Heads

/// Token head (W^s, b^s) and tag head (W^f, b^f) over the same decoder state.
template <typename Scalar>
struct DualHead {
  DualHead() = default;
  DualHead(Eigen::Index d_model, Eigen::Index vocab_size, nn::Rng& rng)
      : token_head("heads.token", d_model, vocab_size, rng), tag_head("heads.tag", d_model, kTagClasses, rng) {}

  Eigen::Index d_model() const { return token_head.in_features(); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(token_head.weight.size() + token_head.bias.size() +
                                    tag_head.weight.size() + tag_head.bias.size());
  }

  void collect(nn::ParameterRefs<Scalar>& out) {
    token_head.collect(out);
    tag_head.collect(out);
  }

  nn::Linear<Scalar> token_head;
  nn::Linear<Scalar> tag_head;
};

template <typename Scalar>
struct DualHeadOutput {
  Vector<Scalar> hidden;
  Vector<Scalar> token_logits;
  Vector<Scalar> token_dist;
  Vector<Scalar> tag_logits;
  Vector<Scalar> tag_dist;
};

/// Softmax of one logit vector.
template <typename Derived>
Vector<typename Derived::Scalar> head_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> row = logits.transpose();
  return nn::softmax_rows(row).transpose();
}

/// (y^s_t, y^f_t) = (W^s h_t + b^s, W^f h_t + b^f).
template <typename Scalar, typename Derived>
std::pair<Vector<Scalar>, Vector<Scalar>> dual_head_project(const DualHead<Scalar>& heads,
                                                            const Eigen::MatrixBase<Derived>& hidden) {
  if (hidden.cols() != 1 || hidden.rows() != heads.d_model()) {
    throw DimensionMismatch("hidden state has " + std::to_string(hidden.rows()) + "x" +
                            std::to_string(hidden.cols()) + " entries, expected " +
                            std::to_string(heads.d_model()));
  }
  Vector<Scalar> token = heads.token_head.weight.value * hidden + heads.token_head.bias.value.transpose();
  Vector<Scalar> tag = heads.tag_head.weight.value * hidden + heads.tag_head.bias.value.transpose();
  return {std::move(token), std::move(tag)};
}

template <typename Scalar, typename Derived>
DualHeadOutput<Scalar> dual_head_output(const DualHead<Scalar>& heads, const Eigen::MatrixBase<Derived>& hidden) {
  auto [token, tag] = dual_head_project(heads, hidden);
  DualHeadOutput<Scalar> out;
  out.hidden = hidden;
  out.token_dist = head_softmax(token);
  out.tag_dist = head_softmax(tag);
  out.token_logits = std::move(token);
  out.tag_logits = std::move(tag);
  return out;
}

// ---------------------------------------------------------------------------
// Loss

template <typename Scalar>
struct JointLoss {
  Scalar token = 0;
  Scalar tag = 0;
  Scalar joint = 0;
  std::size_t token_positions = 0;
  std::size_t tag_positions = 0;
};

template <typename Scalar>
struct LossGradients {
  Matrix<Scalar> token_logits;
  Matrix<Scalar> tag_logits;
};

/// Divisors for the two means. Training passes batch-wide counts so that
/// per-sequence losses add up to the batch mean.
struct LossNormalizers {
  std::size_t token_positions = 0;
  std::size_t tag_positions = 0;
};

/// Mean token cross-entropy over non-PAD targets plus `lambda_tag` times the
/// mean tag cross-entropy over mask-true positions.
template <typename Scalar>
JointLoss<Scalar> joint_loss(const Matrix<Scalar>& token_logits, const Matrix<Scalar>& tag_logits,
                             std::span<const int> target_tokens, std::span<const int> target_tags_shifted,
                             const std::vector<bool>& mask, Scalar lambda_tag,
                             LossGradients<Scalar>* gradients = nullptr,
                             const LossNormalizers* normalizers = nullptr);

/// Tag cross-entropy alone (the phase-1 objective).
template <typename Scalar>
Scalar tag_loss(const Matrix<Scalar>& tag_logits, std::span<const int> target_tags_shifted,
                const std::vector<bool>& mask, Matrix<Scalar>* dtag_logits = nullptr,
                std::size_t normalizer = 0);

// ---------------------------------------------------------------------------
// Model

/// Teacher-forcing view of one example.
struct JointSequence {
  std::vector<int> source;          // flattened dialogue
  std::vector<int> decoder_input;   // BOS + summary ids
  std::vector<int> target_tokens;   // summary ids + EOS
  std::vector<int> target_tags;     // shifted ids where mask, -1 elsewhere
  std::vector<bool> mask;
};

/// Dialogue is truncated from the front to fit `max_len`.
JointSequence make_sequence(const Vocab& vocab, const DialogueExample& example, int max_len);
std::vector<int> encode_source(const Vocab& vocab, const Dialogue& dialogue, int max_len);

template <typename Scalar>
class JointModel {
 public:
  struct Cache {
    Matrix<Scalar> memory;
    typename nn::EncoderStack<Scalar>::Cache encoder;
    typename nn::DecoderStack<Scalar>::Cache decoder;
    Matrix<Scalar> hidden;
    std::vector<int> source;
    std::vector<int> decoder_input;
  };

  struct Output {
    Matrix<Scalar> hidden;
    Matrix<Scalar> token_logits;
    Matrix<Scalar> tag_logits;
  };

  JointModel() = default;
  JointModel(Vocab vocab, nn::TransformerDims dims, std::uint64_t seed);

  bool loaded() const { return vocab_.size() > 0 && tokens_.count() > 0; }
  const Vocab& vocab() const { return vocab_; }
  const nn::TransformerDims& dims() const { return dims_; }

  Output forward(std::span<const int> source, std::span<const int> decoder_input, Cache& cache) const;

  /// Encoder memory for generation.
  Matrix<Scalar> encode(std::span<const int> source) const;
  Output decode(const Matrix<Scalar>& memory, std::span<const int> decoder_input) const;

  /// Backpropagates head-logit gradients. With `heads_only` the body is not
  /// visited (frozen phase-1 training).
  void backward(const Cache& cache, const Matrix<Scalar>& dtoken_logits, const Matrix<Scalar>& dtag_logits,
                bool heads_only = false);

  nn::ParameterRefs<Scalar> parameters();
  nn::ParameterRefs<Scalar> head_parameters();
  nn::ParameterRefs<Scalar> decoder_parameters();
  std::size_t parameter_count() const;

  nn::Embedding<Scalar>& token_embedding() { return tokens_; }
  nn::EncoderStack<Scalar>& encoder() { return encoder_; }
  nn::DecoderStack<Scalar>& decoder() { return decoder_; }
  DualHead<Scalar>& heads() { return heads_; }
  const DualHead<Scalar>& heads() const { return heads_; }

 private:
  Vocab vocab_;
  nn::TransformerDims dims_;
  nn::Embedding<Scalar> tokens_;  // shared by encoder and decoder
  nn::EncoderStack<Scalar> encoder_;
  nn::DecoderStack<Scalar> decoder_;
  DualHead<Scalar> heads_;
};

// ---------------------------------------------------------------------------
// Training

struct JointTrainConfig {
  double learning_rate = 2e-5;
  int train_batch = 4;
  int eval_batch = 1;
  double weight_decay = 0.01;
  int epochs = 15;
  std::uint64_t seed = 42;
  double lambda_tag = 1.0;
  nn::TransformerDims dims;

  // Classifier-only phase: learning rate and decay are shared with the
  // joint phase; epochs and batch follow the token-classifier table.
  int phase1_epochs = 10;
  int phase1_batch = 1;
  bool phase1_unfreeze_decoder = false;

  void validate() const;
};

struct LossRecord {
  long step = 0;
  double token_loss = 0;
  double tag_loss = 0;
  double joint_loss = 0;
};

struct TrainResult {
  std::vector<LossRecord> steps;
  std::vector<double> epoch_losses;  // mean objective over the data after each epoch
  double initial_loss = 0;           // same measure before the first update
};

using EpochCallback = std::function<void(int epoch, double loss)>;

template <typename Scalar>
JointModel<Scalar> make_joint_model(const std::vector<DialogueExample>& examples, const JointTrainConfig& config);

/// Tag head only (optionally also the decoder), teacher-forced on the given
/// summary tokens; the token loss is not applied.
template <typename Scalar>
TrainResult train_phase1(JointModel<Scalar>& model, const std::vector<DialogueExample>& examples,
                         const JointTrainConfig& config, const EpochCallback& on_epoch = {});

/// All parameters against joint_loss.
template <typename Scalar>
TrainResult train_phase2(JointModel<Scalar>& model, const std::vector<DialogueExample>& examples,
                         const JointTrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean (token, tag, joint) loss with teacher forcing; no updates.
template <typename Scalar>
LossRecord evaluate_loss(const JointModel<Scalar>& model, const std::vector<DialogueExample>& examples,
                         double lambda_tag);

/// Token-level accuracy of restricted tag argmax under teacher forcing.
template <typename Scalar>
double teacher_forced_tag_accuracy(const JointModel<Scalar>& model, const std::vector<DialogueExample>& examples);

// ---------------------------------------------------------------------------
// Generation

struct Generation {
  std::vector<std::string> tokens;  // ends with [EOS]
  std::vector<Tag> tags;
  std::vector<int> token_ids;
};

/// Greedy decode with a tag per emitted position. The step that picks EOS,
/// emits [EOS] or reaches `max_len` becomes the [EOS] slot, tagged O or M;
/// other positions are tagged from {O, W, OB, C, N}.
template <typename Scalar>
Generation generate_with_tags(const JointModel<Scalar>& model, std::span<const int> source, int max_len);

template <typename Scalar>
Generation generate_with_tags(const JointModel<Scalar>& model, const Dialogue& dialogue, int max_len);

extern template class JointModel<double>;
extern template class JointModel<float>;

}  // namespace faithtag::joint
