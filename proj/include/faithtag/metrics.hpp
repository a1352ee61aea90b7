#pragma once

#include <Eigen/Core>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faithtag/corpus.hpp"

namespace faithtag::metrics {

/// Maximal run of one non-outside label; `end` is exclusive.
struct TagSpan {
  int label = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const TagSpan&) const = default;
};

/// Spans over integer labels where `outside` contributes none.
std::vector<TagSpan> spanize(std::span<const int> labels, int outside = 0);
std::vector<TagSpan> spanize(const std::vector<Tag>& tags);

struct LabelScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold spans
};

using ConfusionMatrix = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>;

struct PRFReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool degenerate = false;  // some ratio was 0/0 and reported as 0
  std::size_t true_positives = 0;
  std::size_t predicted_spans = 0;
  std::size_t gold_spans = 0;
  std::size_t tokens = 0;
  std::map<std::string, LabelScore> per_label;
  ConfusionMatrix confusion;  // gold x predicted
};

/// Span-exact micro P/R/F1 plus token accuracy. Labels are 0..num_labels-1
/// with 0 the outside label; `names` labels per_label and confusion rows.
PRFReport span_prf(const std::vector<std::vector<int>>& gold,
                   const std::vector<std::vector<int>>& pred,
                   const std::vector<std::string>& names);

/// Six-tag evaluation.
PRFReport tag_prf(const std::vector<std::vector<Tag>>& gold, const std::vector<std::vector<Tag>>& pred);

/// Single label "1" over {0,1} sequences.
PRFReport binary_prf(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& pred);

/// `0/0 -> 0` harmonic mean.
double harmonic_mean(double a, double b) noexcept;

// ---------------------------------------------------------------------------
// ROUGE

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double fmeasure = 0.0;
};

struct RougeOptions {
  bool lowercase = true;
};

RougeScore rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                   int n, RougeOptions options = {});
RougeScore rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                   RougeOptions options = {});

/// Sentences split on newlines and sentence-final `.` `?` `!`, tokens as in
/// `rouge_tokens`.
std::vector<std::vector<std::string>> rouge_sentences(std::string_view text);

/// Token stream used for text-level ROUGE: `tokenize` minus punctuation tokens.
std::vector<std::string> rouge_tokens(std::string_view text);

/// Summary-level union-LCS over pre-split sentences.
RougeScore rouge_lsum(const std::vector<std::vector<std::string>>& candidate_sentences,
                      const std::vector<std::vector<std::string>>& reference_sentences,
                      RougeOptions options = {});
RougeScore rouge_lsum(std::string_view candidate_text, std::string_view reference_text,
                      RougeOptions options = {});

/// Positions in `reference` of one LCS with `candidate`. The backtrace walks
/// from the end and prefers dropping a reference token on ties.
std::vector<std::size_t> lcs_indices(std::span<const std::string> reference,
                                     std::span<const std::string> candidate);

struct TextPair {
  std::string candidate;
  std::string reference;
};

/// Keys: rouge1, rouge2, rougeL, rougeLsum. Means of per-pair components.
std::map<std::string, RougeScore> corpus_rouge(const std::vector<TextPair>& pairs,
                                               RougeOptions options = {});

}  // namespace faithtag::metrics
