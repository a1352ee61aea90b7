#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "faithtag/corpus.hpp"
#include "faithtag/metrics.hpp"
#include "faithtag/nn/optim.hpp"
#include "faithtag/nn/transformer.hpp"
#include "faithtag/vocab.hpp"

namespace faithtag::proxy {

using nn::Matrix;

/// HS: dialogue and candidate summary. GS: the gold summary sits in between.
enum class ProxyMode : std::uint8_t { HS, GS };

std::string_view mode_name(ProxyMode mode) noexcept;
ProxyMode parse_mode(std::string_view name);  // throws UnknownVariant

/// `L [SEP] (G [SEP])? S [EOS]`. The summary region is [start, end) and
/// always ends at the final [EOS] slot.
struct ProxyInput {
  ProxyMode mode = ProxyMode::HS;
  std::vector<int> input_ids;
  std::pair<std::size_t, std::size_t> summary_region{0, 0};
};

/// Dialogue is truncated from the front to fit `max_len`, then the gold
/// summary; the candidate summary never is.
ProxyInput assemble_input(const Vocab& vocab, const Dialogue& dialogue, const std::vector<std::string>& summary,
                          const std::optional<std::vector<std::string>>& gold_summary, ProxyMode mode,
                          int max_len = 512);
ProxyInput assemble_input(const Vocab& vocab, const DialogueExample& example, ProxyMode mode, int max_len = 512);

/// Inverse of assemble_input: (dialogue ids, gold ids, summary ids).
struct ProxyParts {
  std::vector<int> dialogue;
  std::optional<std::vector<int>> gold;
  std::vector<int> summary;
};
ProxyParts disassemble(const ProxyInput& input);

enum class LabelSpace : std::uint8_t { Multiclass, Binary };

inline int label_count(LabelSpace space) { return space == LabelSpace::Multiclass ? 6 : 2; }

/// Per-position targets: the summary's tags (binarized when asked), O elsewhere.
std::vector<int> position_targets(const ProxyInput& input, const TaggedSummary& summary, LabelSpace space);

struct ProxyTrainConfig {
  double learning_rate = 2e-5;
  int batch_size = 1;
  int epochs = 10;
  double weight_decay = 0.01;
  std::string best_model_metric = "f1";
  LabelSpace label_space = LabelSpace::Multiclass;
  ProxyMode mode = ProxyMode::HS;
  nn::TransformerDims dims{.encoder_layers = 2, .decoder_layers = 0};
  std::uint64_t seed = 42;

  void validate() const;
};

template <typename Scalar>
class ProxyModel {
 public:
  struct Cache {
    typename nn::EncoderStack<Scalar>::Cache encoder;
    Matrix<Scalar> hidden;
    std::vector<int> ids;
  };

  ProxyModel() = default;
  ProxyModel(Vocab vocab, nn::TransformerDims dims, LabelSpace space, ProxyMode mode, std::uint64_t seed);

  bool loaded() const { return vocab_.size() > 0 && tokens_.count() > 0; }
  const Vocab& vocab() const { return vocab_; }
  const nn::TransformerDims& dims() const { return dims_; }
  LabelSpace label_space() const { return space_; }
  ProxyMode mode() const { return mode_; }

  /// Logits for every input position (rows) over the label space.
  Matrix<Scalar> forward(std::span<const int> ids, Cache& cache) const;
  Matrix<Scalar> logits(std::span<const int> ids) const;
  void backward(const Cache& cache, const Matrix<Scalar>& dlogits);

  nn::ParameterRefs<Scalar> parameters();
  std::size_t parameter_count() const;

 private:
  Vocab vocab_;
  nn::TransformerDims dims_;
  LabelSpace space_ = LabelSpace::Multiclass;
  ProxyMode mode_ = ProxyMode::HS;
  nn::Embedding<Scalar> tokens_;
  nn::EncoderStack<Scalar> encoder_;
  nn::Linear<Scalar> classifier_;
};

/// Tags over the summary region. Multiclass: interior from {O,W,OB,C,N}, the
/// [EOS] slot from {O,M}. Binary: 0/1 per position.
template <typename Scalar>
std::vector<int> predict_labels(const ProxyModel<Scalar>& model, const ProxyInput& input);

template <typename Scalar>
std::vector<Tag> predict_tags(const ProxyModel<Scalar>& model, const ProxyInput& input);

struct EpochReport {
  int epoch = 0;
  double train_loss = 0;  // mean over the epoch's steps
  metrics::PRFReport validation;
};

template <typename Scalar>
struct ProxyTrainResult {
  ProxyModel<Scalar> model;  // best by (f1, accuracy) on the validation set
  std::vector<EpochReport> epochs;
  std::vector<double> step_losses;
  int best_epoch = 0;
};

using ProxyEpochCallback = std::function<void(const EpochReport&)>;

/// Validation defaults to the training data when empty.
template <typename Scalar>
ProxyTrainResult<Scalar> train_proxy(const std::vector<DialogueExample>& train,
                                     const std::vector<DialogueExample>& validation, const ProxyTrainConfig& config,
                                     const ProxyEpochCallback& on_epoch = {});

/// Scores predicted summary tags against gold; the binary label space uses
/// binary_prf on binarized sequences.
template <typename Scalar>
metrics::PRFReport evaluate_proxy(const ProxyModel<Scalar>& model, const std::vector<DialogueExample>& examples);

struct PredictionRecord {
  std::string dialogue_id;
  std::vector<std::string> tokens;
  std::vector<int> pred_tags;
  std::vector<int> gold_tags;
  std::optional<bool> valid;
  std::optional<std::string> failure_reason;
};

std::string prediction_to_jsonl(const PredictionRecord& record);
PredictionRecord prediction_from_jsonl(const std::string& line, std::size_t line_number = 0);
std::vector<PredictionRecord> load_predictions(const std::string& path);
void save_predictions(const std::string& path, const std::vector<PredictionRecord>& records);

template <typename Scalar>
std::vector<PredictionRecord> predict_dataset(const ProxyModel<Scalar>& model,
                                              const std::vector<DialogueExample>& examples);

extern template class ProxyModel<double>;
extern template class ProxyModel<float>;

}  // namespace faithtag::proxy
