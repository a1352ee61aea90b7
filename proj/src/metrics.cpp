#include "faithtag/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace faithtag::metrics {

double harmonic_mean(double a, double b) noexcept {
  return (a + b) == 0.0 ? 0.0 : 2.0 * a * b / (a + b);
}

std::vector<TagSpan> spanize(std::span<const int> labels, int outside) {
  std::vector<TagSpan> spans;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] == outside) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    spans.push_back({labels[i], i, j});
    i = j;
  }
  return spans;
}

namespace {

std::vector<int> tag_ids(const std::vector<Tag>& tags) {
  std::vector<int> ids;
  ids.reserve(tags.size());
  for (Tag t : tags) ids.push_back(base_id(t));
  return ids;
}

double ratio(std::size_t num, std::size_t den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<TagSpan> spanize(const std::vector<Tag>& tags) {
  auto ids = tag_ids(tags);
  return spanize(std::span<const int>(ids), 0);
}

PRFReport span_prf(const std::vector<std::vector<int>>& gold,
                   const std::vector<std::vector<int>>& pred,
                   const std::vector<std::string>& names) {
  if (gold.size() != pred.size()) {
    throw LengthMismatch("gold has " + std::to_string(gold.size()) + " sequences, pred has " +
                         std::to_string(pred.size()));
  }
  const auto num_labels = static_cast<Eigen::Index>(names.size());
  PRFReport report;
  report.confusion = ConfusionMatrix::Zero(num_labels, num_labels);

  std::vector<std::size_t> tp(names.size(), 0), n_pred(names.size(), 0), n_gold(names.size(), 0);
  std::size_t correct_tokens = 0;

  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& g = gold[s];
    const auto& p = pred[s];
    if (g.size() != p.size()) {
      throw LengthMismatch("sequence " + std::to_string(s) + ": gold length " +
                           std::to_string(g.size()) + " != pred length " + std::to_string(p.size()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] < 0 || g[i] >= num_labels || p[i] < 0 || p[i] >= num_labels) {
        throw OutOfRangeTagId("sequence " + std::to_string(s) + " position " + std::to_string(i) +
                              ": label outside 0.." + std::to_string(num_labels - 1));
      }
      ++report.confusion(g[i], p[i]);
      if (g[i] == p[i]) ++correct_tokens;
    }
    report.tokens += g.size();

    auto gold_spans = spanize(std::span<const int>(g), 0);
    auto pred_spans = spanize(std::span<const int>(p), 0);
    std::set<TagSpan> gold_set(gold_spans.begin(), gold_spans.end());
    for (const auto& sp : gold_spans) ++n_gold[sp.label];
    for (const auto& sp : pred_spans) {
      ++n_pred[sp.label];
      if (gold_set.count(sp)) ++tp[sp.label];
    }
  }

  for (std::size_t l = 1; l < names.size(); ++l) {
    report.true_positives += tp[l];
    report.predicted_spans += n_pred[l];
    report.gold_spans += n_gold[l];
    bool unused = false;
    LabelScore score;
    score.precision = ratio(tp[l], n_pred[l], unused);
    score.recall = ratio(tp[l], n_gold[l], unused);
    score.f1 = harmonic_mean(score.precision, score.recall);
    score.support = n_gold[l];
    report.per_label[names[l]] = score;
  }

  bool degenerate = false;
  report.precision = ratio(report.true_positives, report.predicted_spans, degenerate);
  report.recall = ratio(report.true_positives, report.gold_spans, degenerate);
  if (report.precision + report.recall == 0.0) degenerate = true;
  report.f1 = harmonic_mean(report.precision, report.recall);
  report.accuracy = ratio(correct_tokens, report.tokens, degenerate);
  report.degenerate = degenerate;
  return report;
}

PRFReport tag_prf(const std::vector<std::vector<Tag>>& gold, const std::vector<std::vector<Tag>>& pred) {
  std::vector<std::vector<int>> g, p;
  g.reserve(gold.size());
  p.reserve(pred.size());
  for (const auto& s : gold) g.push_back(tag_ids(s));
  for (const auto& s : pred) p.push_back(tag_ids(s));
  std::vector<std::string> names;
  for (Tag t : kAllTags) names.emplace_back(tag_code(t));
  return span_prf(g, p, names);
}

PRFReport binary_prf(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& pred) {
  return span_prf(gold, pred, {"0", "1"});
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> normalized(const std::vector<std::string>& tokens, RougeOptions options) {
  if (!options.lowercase) return tokens;
  std::vector<std::string> out = tokens;
  for (auto& t : out) {
    std::transform(t.begin(), t.end(), t.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  }
  return out;
}

RougeScore make_score(double precision, double recall) {
  return {precision, recall, harmonic_mean(precision, recall)};
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& tokens,
                                                             std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                      tokens.begin() + static_cast<long>(i + n))];
  }
  return counts;
}

std::vector<std::vector<std::size_t>> lcs_table(std::span<const std::string> a,
                                                std::span<const std::string> b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t;
}

bool is_punct_token(const std::string& t) {
  return t.size() == 1 && (t[0] == '.' || t[0] == ',' || t[0] == '?' || t[0] == '!');
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                   int n, RougeOptions options) {
  if (n < 1) throw DimensionMismatch("rouge_n requires n >= 1");
  const auto nn = static_cast<std::size_t>(n);
  auto cand = ngram_counts(normalized(candidate, options), nn);
  auto ref = ngram_counts(normalized(reference, options), nn);
  std::size_t overlap = 0, cand_total = 0, ref_total = 0;
  for (const auto& [gram, c] : cand) {
    cand_total += c;
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [gram, c] : ref) ref_total += c;
  double p = cand_total ? static_cast<double>(overlap) / static_cast<double>(cand_total) : 0.0;
  double r = ref_total ? static_cast<double>(overlap) / static_cast<double>(ref_total) : 0.0;
  return make_score(p, r);
}

RougeScore rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                   RougeOptions options) {
  auto cand = normalized(candidate, options);
  auto ref = normalized(reference, options);
  if (cand.empty() || ref.empty()) return {};
  auto t = lcs_table(ref, cand);
  double lcs = static_cast<double>(t[ref.size()][cand.size()]);
  return make_score(lcs / static_cast<double>(cand.size()), lcs / static_cast<double>(ref.size()));
}

std::vector<std::size_t> lcs_indices(std::span<const std::string> reference,
                                     std::span<const std::string> candidate) {
  auto t = lcs_table(reference, candidate);
  std::vector<std::size_t> out;
  std::size_t i = reference.size(), j = candidate.size();
  while (i > 0 && j > 0) {
    if (reference[i - 1] == candidate[j - 1]) {
      out.push_back(i - 1);
      --i;
      --j;
    } else if (t[i][j - 1] > t[i - 1][j]) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize(text)) {
    if (!is_punct_token(t)) out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::vector<std::string>> rouge_sentences(std::string_view text) {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> current;
  auto flush = [&] {
    if (!current.empty()) sentences.push_back(std::move(current));
    current.clear();
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    for (auto& tok : tokenize(line)) {
      if (tok == "." || tok == "?" || tok == "!") {
        flush();
      } else if (!is_punct_token(tok)) {
        current.push_back(std::move(tok));
      }
    }
    flush();
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return sentences;
}

RougeScore rouge_lsum(const std::vector<std::vector<std::string>>& candidate_sentences,
                      const std::vector<std::vector<std::string>>& reference_sentences,
                      RougeOptions options) {
  std::vector<std::vector<std::string>> cands, refs;
  std::map<std::string, long> cand_counts, ref_counts;
  std::size_t cand_total = 0, ref_total = 0;
  for (const auto& s : candidate_sentences) {
    cands.push_back(normalized(s, options));
    for (const auto& t : cands.back()) ++cand_counts[t];
    cand_total += s.size();
  }
  for (const auto& s : reference_sentences) {
    refs.push_back(normalized(s, options));
    for (const auto& t : refs.back()) ++ref_counts[t];
    ref_total += s.size();
  }
  if (cand_total == 0 || ref_total == 0) return {};

  std::size_t hits = 0;
  for (const auto& ref : refs) {
    std::set<std::size_t> uni;
    for (const auto& cand : cands) {
      for (auto idx : lcs_indices(ref, cand)) uni.insert(idx);
    }
    for (auto idx : uni) {
      const auto& tok = ref[idx];
      if (cand_counts[tok] > 0 && ref_counts[tok] > 0) {
        ++hits;
        --cand_counts[tok];
        --ref_counts[tok];
      }
    }
  }
  return make_score(static_cast<double>(hits) / static_cast<double>(cand_total),
                    static_cast<double>(hits) / static_cast<double>(ref_total));
}

RougeScore rouge_lsum(std::string_view candidate_text, std::string_view reference_text,
                      RougeOptions options) {
  return rouge_lsum(rouge_sentences(candidate_text), rouge_sentences(reference_text), options);
}

std::map<std::string, RougeScore> corpus_rouge(const std::vector<TextPair>& pairs, RougeOptions options) {
  if (pairs.empty()) throw EmptyCorpus("corpus_rouge needs at least one pair");
  std::map<std::string, RougeScore> sums = {
      {"rouge1", {}}, {"rouge2", {}}, {"rougeL", {}}, {"rougeLsum", {}}};
  auto add = [](RougeScore& acc, const RougeScore& s) {
    acc.precision += s.precision;
    acc.recall += s.recall;
    acc.fmeasure += s.fmeasure;
  };
  for (const auto& pair : pairs) {
    auto cand = rouge_tokens(pair.candidate);
    auto ref = rouge_tokens(pair.reference);
    add(sums["rouge1"], rouge_n(cand, ref, 1, options));
    add(sums["rouge2"], rouge_n(cand, ref, 2, options));
    add(sums["rougeL"], rouge_l(cand, ref, options));
    add(sums["rougeLsum"], rouge_lsum(pair.candidate, pair.reference, options));
  }
  const double n = static_cast<double>(pairs.size());
  for (auto& [name, s] : sums) {
    s.precision /= n;
    s.recall /= n;
    s.fmeasure /= n;
  }
  return sums;
}

}  // namespace faithtag::metrics
