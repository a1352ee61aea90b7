#include "faithtag/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace faithtag {

using nlohmann::json;

Tag tag_from_base_id(int id) {
  if (id < 0 || id >= static_cast<int>(kNumTags)) {
    throw OutOfRangeTagId("base tag id " + std::to_string(id) + " outside 0..5");
  }
  return static_cast<Tag>(id);
}

std::string_view tag_code(Tag tag) noexcept {
  switch (tag) {
    case Tag::O: return "O";
    case Tag::W: return "W";
    case Tag::OB: return "OB";
    case Tag::C: return "C";
    case Tag::N: return "N";
    case Tag::M: return "M";
  }
  return "?";
}

std::string_view tag_description(Tag tag) noexcept {
  switch (tag) {
    case Tag::O: return "Not hallucinated";
    case Tag::W: return "Wrong reference error";
    case Tag::OB: return "Object error";
    case Tag::C: return "Circumstantial error";
    case Tag::N: return "Other uncommon errors";
    case Tag::M: return "Missing information";
  }
  return "";
}

std::optional<Tag> parse_tag_code(std::string_view code) noexcept {
  for (Tag t : kAllTags) {
    if (tag_code(t) == code) return t;
  }
  return std::nullopt;
}

std::string_view split_name(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "";
}

std::vector<DialogueExample> Dataset::subset(Split split) const {
  if (!split_assignment) throw BadRatio("dataset has no split assignment");
  std::vector<DialogueExample> out;
  for (const auto& ex : examples) {
    auto it = split_assignment->find(ex.dialogue.id);
    if (it != split_assignment->end() && it->second == split) out.push_back(ex);
  }
  return out;
}

std::vector<PositionProblem> summary_problems(const TaggedSummary& summary) {
  std::vector<PositionProblem> problems;
  const auto& tokens = summary.tokens;
  const auto& tags = summary.tags;
  if (tokens.empty()) {
    problems.push_back({0, "summary has no tokens"});
    return problems;
  }
  if (tags.size() != tokens.size()) {
    problems.push_back({std::min(tags.size(), tokens.size()),
                        "tag count " + std::to_string(tags.size()) + " != token count " +
                            std::to_string(tokens.size())});
  }
  if (tokens.back() != kEosToken) {
    problems.push_back({tokens.size() - 1, "last token must be [EOS]"});
  }
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (tokens[i] == kEosToken) problems.push_back({i, "[EOS] before the end of the summary"});
  }
  for (std::size_t i = 0; i + 1 < tags.size(); ++i) {
    if (tags[i] == Tag::M) problems.push_back({i, "M is only legal at the [EOS] slot"});
  }
  return problems;
}

void validate_summary(const TaggedSummary& summary) {
  auto problems = summary_problems(summary);
  if (!problems.empty()) {
    throw InvalidSummary(InvalidTags(std::move(problems)).what());
  }
}

void validate_example(const DialogueExample& example) {
  if (example.dialogue.turns.empty()) throw InvalidSummary("dialogue has no turns");
  for (const auto& turn : example.dialogue.turns) {
    if (turn.speaker.empty()) throw InvalidSummary("empty speaker");
  }
  if (example.gold_summary && example.gold_summary->empty()) {
    throw InvalidSummary("gold_summary present but empty");
  }
  validate_summary(example.summary);
}

TaggedSummary make_summary(std::vector<std::string> tokens, std::vector<Tag> tags, Tag eos_tag) {
  tokens.emplace_back(kEosToken);
  tags.push_back(eos_tag);
  return TaggedSummary{std::move(tokens), std::move(tags), std::nullopt};
}

// ---------------------------------------------------------------------------

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_sentence_punct(char c) { return c == '.' || c == ',' || c == '?' || c == '!'; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (start == i) continue;
    std::string_view chunk = text.substr(start, i - start);
    std::size_t core = chunk.size();
    while (core > 0 && is_sentence_punct(chunk[core - 1])) --core;
    if (core > 0) out.emplace_back(chunk.substr(0, core));
    for (std::size_t k = core; k < chunk.size(); ++k) out.emplace_back(1, chunk[k]);
  }
  return out;
}

std::vector<std::string> flatten_dialogue(const Dialogue& dialogue) {
  std::vector<std::string> out;
  for (const auto& turn : dialogue.turns) {
    out.push_back(turn.speaker);
    out.emplace_back(":");
    auto words = tokenize(turn.utterance);
    out.insert(out.end(), words.begin(), words.end());
  }
  return out;
}

std::string dialogue_text(const Dialogue& dialogue) {
  std::string out;
  for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
    if (i) out += '\n';
    out += dialogue.turns[i].speaker + ": " + dialogue.turns[i].utterance;
  }
  return out;
}

InlineTagged parse_inline_tagged(std::string_view text) {
  InlineTagged out;
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = text.find(' ', pos);
    std::string_view item = text.substr(pos, next == std::string_view::npos ? text.npos : next - pos);
    std::size_t open = item.rfind('(');
    if (item.empty() || item.back() != ')' || open == std::string_view::npos || open == 0) {
      throw MalformedInlineTag("item '" + std::string(item) + "' lacks a word(TAG) form");
    }
    auto code = item.substr(open + 1, item.size() - open - 2);
    auto tag = parse_tag_code(code);
    if (!tag) throw MalformedInlineTag("unknown tag code '" + std::string(code) + "'");
    out.tokens.emplace_back(item.substr(0, open));
    out.tags.push_back(*tag);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string render_inline_tagged(const std::vector<std::string>& tokens,
                                 const std::vector<Tag>& tags) {
  if (tokens.size() != tags.size()) {
    throw LengthMismatch("render_inline_tagged: " + std::to_string(tokens.size()) +
                         " tokens vs " + std::to_string(tags.size()) + " tags");
  }
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    if (tok.empty() || std::any_of(tok.begin(), tok.end(), is_space)) {
      throw MalformedInlineTag("token at " + std::to_string(i) + " is empty or has whitespace");
    }
    if (i) out += ' ';
    out += tok;
    out += '(';
    out += tag_code(tags[i]);
    out += ')';
  }
  return out;
}

std::vector<int> binarize_tags(const std::vector<Tag>& tags) {
  std::vector<int> out;
  out.reserve(tags.size());
  for (Tag t : tags) out.push_back(t == Tag::O ? 0 : 1);
  return out;
}

// ---------------------------------------------------------------------------

std::array<std::size_t, 3> split_sizes(std::size_t n, SplitRatios ratios) {
  const std::array<int, 3> r = {ratios.train, ratios.validation, ratios.test};
  if (r[0] <= 0 || r[1] <= 0 || r[2] <= 0 || r[0] + r[1] + r[2] != 100) {
    throw BadRatio("split ratios must be positive and sum to 100, got " + std::to_string(r[0]) +
                   "," + std::to_string(r[1]) + "," + std::to_string(r[2]));
  }
  std::array<std::size_t, 3> sizes{};
  std::array<std::size_t, 3> remainder{};  // in units of 1/100 dialogue
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    std::size_t scaled = n * static_cast<std::size_t>(r[k]);
    sizes[k] = scaled / 100;
    remainder[k] = scaled % 100;
    assigned += sizes[k];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

Dataset split_by_dialogue(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed) {
  if (dataset.examples.empty()) throw EmptyDataset("cannot split an empty dataset");
  std::set<std::string> unique;
  for (const auto& ex : dataset.examples) unique.insert(ex.dialogue.id);
  std::vector<std::string> ids(unique.begin(), unique.end());
  const auto sizes = split_sizes(ids.size(), ratios);

  // Fisher-Yates over a fixed engine keeps the split identical across platforms.
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(ids[i - 1], ids[j]);
  }

  std::map<std::string, Split> assignment;
  std::size_t k = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t c = 0; c < sizes[s]; ++c, ++k) assignment[ids[k]] = static_cast<Split>(s);
  }
  Dataset out{dataset.examples, std::move(assignment)};
  return out;
}

TagStats tag_stats(const std::vector<DialogueExample>& examples) {
  TagStats stats;
  for (Tag t : kAllTags) stats[t] = TagCount{};
  std::size_t total = 0;
  for (const auto& ex : examples) {
    for (Tag t : ex.summary.tags) {
      ++stats[t].count;
      ++total;
    }
  }
  if (total > 0) {
    for (auto& [tag, c] : stats) c.fraction = static_cast<double>(c.count) / static_cast<double>(total);
  }
  return stats;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> string_array(const json& j, const char* field, std::size_t line) {
  if (!j.is_array()) throw SchemaError(line, std::string(field) + " must be an array");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_string()) throw SchemaError(line, std::string(field) + " must contain strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

std::string example_to_jsonl(const DialogueExample& ex) {
  json turns = json::array();
  for (const auto& t : ex.dialogue.turns) turns.push_back(json::array({t.speaker, t.utterance}));
  json tags = json::array();
  for (Tag t : ex.summary.tags) tags.push_back(std::string(tag_code(t)));
  json j;
  j["dialogue_id"] = ex.dialogue.id;
  j["turns"] = std::move(turns);
  j["summary_tokens"] = ex.summary.tokens;
  j["tags"] = std::move(tags);
  j["gold_summary"] = ex.gold_summary ? json(*ex.gold_summary) : json(nullptr);
  j["source_model"] = ex.summary.source_model ? json(*ex.summary.source_model) : json(nullptr);
  return j.dump();
}

DialogueExample example_from_jsonl(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(line_number, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError(line_number, "line is not a JSON object");
  for (const char* key : {"dialogue_id", "turns", "summary_tokens", "tags"}) {
    if (!j.contains(key)) throw SchemaError(line_number, std::string("missing field ") + key);
  }
  DialogueExample ex;
  if (!j["dialogue_id"].is_string()) throw SchemaError(line_number, "dialogue_id must be a string");
  ex.dialogue.id = j["dialogue_id"].get<std::string>();
  if (!j["turns"].is_array() || j["turns"].empty()) {
    throw SchemaError(line_number, "turns must be a non-empty array");
  }
  for (const auto& t : j["turns"]) {
    if (!t.is_array() || t.size() != 2 || !t[0].is_string() || !t[1].is_string()) {
      throw SchemaError(line_number, "each turn must be [speaker, utterance]");
    }
    ex.dialogue.turns.push_back({t[0].get<std::string>(), t[1].get<std::string>()});
  }
  ex.summary.tokens = string_array(j["summary_tokens"], "summary_tokens", line_number);
  for (const auto& code : string_array(j["tags"], "tags", line_number)) {
    auto tag = parse_tag_code(code);
    if (!tag) throw SchemaError(line_number, "unknown tag code '" + code + "'");
    ex.summary.tags.push_back(*tag);
  }
  if (j.contains("gold_summary") && !j["gold_summary"].is_null()) {
    ex.gold_summary = string_array(j["gold_summary"], "gold_summary", line_number);
  }
  if (j.contains("source_model") && !j["source_model"].is_null()) {
    if (!j["source_model"].is_string()) throw SchemaError(line_number, "source_model must be a string");
    ex.summary.source_model = j["source_model"].get<std::string>();
  }
  try {
    validate_example(ex);
  } catch (const Error& e) {
    throw SchemaError(line_number, e.what());
  }
  return ex;
}

Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ds.examples.push_back(example_from_jsonl(line, n));
  }
  return ds;
}

void write_dataset(std::ostream& out, const std::vector<DialogueExample>& examples) {
  for (const auto& ex : examples) out << example_to_jsonl(ex) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset(in);
}

void save_dataset(const std::vector<DialogueExample>& examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_dataset(out, examples);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace faithtag
