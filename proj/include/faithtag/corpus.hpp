#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "faithtag/errors.hpp"

namespace faithtag {

/// Token-level faithfulness tag. The enumerator value is the base id.
enum class Tag : std::uint8_t { O = 0, W = 1, OB = 2, C = 3, N = 4, M = 5 };

inline constexpr std::size_t kNumTags = 6;
inline constexpr std::array<Tag, kNumTags> kAllTags = {Tag::O, Tag::W, Tag::OB,
                                                       Tag::C, Tag::N, Tag::M};

/// Literal end-of-summary token; the only slot allowed to carry M.
inline constexpr std::string_view kEosToken = "[EOS]";

constexpr int base_id(Tag tag) noexcept { return static_cast<int>(tag); }
Tag tag_from_base_id(int id);

std::string_view tag_code(Tag tag) noexcept;
std::string_view tag_description(Tag tag) noexcept;
std::optional<Tag> parse_tag_code(std::string_view code) noexcept;

struct Turn {
  std::string speaker;
  std::string utterance;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;

  bool operator==(const Dialogue&) const = default;
};

struct TaggedSummary {
  std::vector<std::string> tokens;  // ends with kEosToken
  std::vector<Tag> tags;
  std::optional<std::string> source_model;

  bool operator==(const TaggedSummary&) const = default;
};

struct DialogueExample {
  Dialogue dialogue;
  TaggedSummary summary;
  std::optional<std::vector<std::string>> gold_summary;

  bool operator==(const DialogueExample&) const = default;
};

enum class Split : std::uint8_t { Train, Validation, Test };

std::string_view split_name(Split split) noexcept;

struct Dataset {
  std::vector<DialogueExample> examples;
  std::optional<std::map<std::string, Split>> split_assignment;

  /// Examples whose dialogue is assigned to `split`; requires an assignment.
  std::vector<DialogueExample> subset(Split split) const;
};

/// Problems with a summary's tag/token invariants; empty means valid.
std::vector<PositionProblem> summary_problems(const TaggedSummary& summary);
void validate_summary(const TaggedSummary& summary);  // throws InvalidSummary
void validate_example(const DialogueExample& example);

/// Builds a summary from plain tokens by appending the [EOS] slot.
TaggedSummary make_summary(std::vector<std::string> tokens, std::vector<Tag> tags, Tag eos_tag);

// ---------------------------------------------------------------------------
// Text

/// Whitespace split, then trailing `.` `,` `?` `!` become separate tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Flattened dialogue stream: `speaker : utterance-tokens` for every turn.
std::vector<std::string> flatten_dialogue(const Dialogue& dialogue);

/// One turn per line, `speaker: utterance`.
std::string dialogue_text(const Dialogue& dialogue);

struct InlineTagged {
  std::vector<std::string> tokens;
  std::vector<Tag> tags;

  bool operator==(const InlineTagged&) const = default;
};

/// Parses `word(TAG) word(TAG) ...`; throws MalformedInlineTag.
InlineTagged parse_inline_tagged(std::string_view text);

/// Inverse of parse_inline_tagged; throws LengthMismatch.
std::string render_inline_tagged(const std::vector<std::string>& tokens,
                                 const std::vector<Tag>& tags);

/// O -> 0, anything else -> 1.
std::vector<int> binarize_tags(const std::vector<Tag>& tags);

// ---------------------------------------------------------------------------
// Dataset operations

struct SplitRatios {
  int train = 76;
  int validation = 12;
  int test = 12;
};

/// Assigns each unique dialogue id to one split. Ratios are percentages of
/// unique dialogues; remainders go to the largest fractional part, ties to
/// the earlier split (train first).
Dataset split_by_dialogue(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed);

/// Split sizes (in dialogues) for `n` dialogues.
std::array<std::size_t, 3> split_sizes(std::size_t n, SplitRatios ratios);

struct TagCount {
  std::size_t count = 0;
  double fraction = 0.0;
};

using TagStats = std::map<Tag, TagCount>;

TagStats tag_stats(const std::vector<DialogueExample>& examples);
inline TagStats tag_stats(const Dataset& dataset) { return tag_stats(dataset.examples); }

// ---------------------------------------------------------------------------
// JSONL persistence (one DialogueExample per line)

std::string example_to_jsonl(const DialogueExample& example);
DialogueExample example_from_jsonl(std::string_view line, std::size_t line_number);

Dataset read_dataset(std::istream& in);
void write_dataset(std::ostream& out, const std::vector<DialogueExample>& examples);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::vector<DialogueExample>& examples, const std::filesystem::path& path);
inline void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  save_dataset(dataset.examples, path);
}

}  // namespace faithtag
