#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "faithtag/corpus.hpp"
#include "faithtag/proxy_tagger.hpp"

namespace faithtag::prompt {

enum class Role : std::uint8_t { System, User, Assistant };
std::string_view role_name(Role role) noexcept;

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// System message first, then (user, assistant) example pairs, then the query.
struct ChatTranscript {
  std::vector<ChatMessage> messages;

  bool operator==(const ChatTranscript&) const = default;
};

enum class PromptVariant : std::uint8_t {
  Tagging2,
  Tagging3,
  Tagging6,
  Tagging8,
  Tagging9,
  SummZero,
  SummOne,
  SummFew,
  SummTagging,
  SummTaggingExplain,
};

std::string_view variant_name(PromptVariant v) noexcept;  // "tagging-9", "summ-few", ...
PromptVariant parse_variant(std::string_view name);       // throws UnknownVariant
bool is_tagging_variant(PromptVariant v) noexcept;

struct PromptExample {
  std::string user;
  std::string assistant;
};

/// Text of a prompt as it is sent. For tagging-2 the worked examples are
/// inlined in the system text and `examples` is empty.
struct PromptTemplate {
  std::string system;
  std::vector<PromptExample> examples;
};

const PromptTemplate& tagging_template(PromptVariant v);  // throws UnknownVariant

/// Dialogue/summary pair used as a worked summarization example.
struct SummaryShot {
  Dialogue dialogue;
  std::string summary;
};
const std::vector<SummaryShot>& default_summary_shots();

/// Summary tokens without the [EOS] slot, punctuation attached to the word before.
std::string detokenize(const std::vector<std::string>& tokens);

/// `"A: ...\nB: ..."`, quoted as in the prompt examples.
std::string quoted_dialogue(const Dialogue& dialogue);

ChatTranscript build_tagging_prompt(PromptVariant variant, const Dialogue& dialogue,
                                    const std::vector<std::string>& summary_tokens);

/// zero: shots must be 0; one: exactly 1; few: at least 2. The tagging
/// variants take 0 or 1 shot of the worked hallucination example. Throws
/// BadShots or UnknownVariant.
ChatTranscript build_summarization_prompt(PromptVariant variant, const Dialogue& dialogue, int shots,
                                          const std::vector<SummaryShot>& pool = default_summary_shots());

// ---------------------------------------------------------------------------
// Parsing

struct ParsedTagOutput {
  std::vector<std::string> tokens;
  std::vector<Tag> tags;  // without the [EOS] slot
  std::optional<bool> missing_info;
  bool valid = false;
  std::optional<std::string> failure_reason;

  /// tags plus M or O for the [EOS] slot; empty unless valid.
  std::vector<Tag> summary_tags() const;
};

/// First `<TG>...<TG>` block as inline `word(TAG)` items and the first
/// `<MI>...<MI>` block as yes/no. `expected_token_count` excludes [EOS].
ParsedTagOutput parse_tagger_output(std::string_view text, std::size_t expected_token_count);

/// The `Tags: word(TAG) ... <EOS>(M)` answer format.
ParsedTagOutput parse_inline_answer(std::string_view text, std::size_t expected_token_count);

/// Summary text from a summarization reply, with Tags/Explanation blocks removed.
std::string extract_summary(std::string_view reply);

// ---------------------------------------------------------------------------
// Clients and batches

struct RequestContext {
  std::string example_id;
  std::size_t index = 0;  // position in the batch
  int attempt = 0;  // 0 for the first send, then one per retry
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Throws ClientError (or anything else, which the batch runner wraps).
  virtual std::string send(const ChatTranscript& transcript, const RequestContext& context) = 0;
};

/// Canned replies keyed by "id#index" or, failing that, by example id. A value is one reply or a list with
/// one entry per attempt; attempts past the end reuse the last entry.
class ScriptedClient : public ChatClient {
 public:
  explicit ScriptedClient(std::map<std::string, std::vector<std::string>> replies);
  static ScriptedClient from_json(std::string_view text);
  static ScriptedClient from_file(const std::filesystem::path& path);

  std::string send(const ChatTranscript& transcript, const RequestContext& context) override;

 private:
  std::map<std::string, std::vector<std::string>> replies_;
};

inline constexpr std::string_view kFormatReminder =
    "Your answer could not be read. Reply again with one word(TAG) item per summary token between <TG> and "
    "<TG>, then Missing Information- <MI>Yes<MI> or <MI>No<MI>.";

struct BatchOptions {
  int retry_limit = 1;
  int concurrency = 1;
};

struct BatchItem {
  proxy::PredictionRecord record;  // pred_tags empty when invalid
  ParsedTagOutput parsed;
  int attempts = 0;
  std::string last_reply;
};

struct BatchResult {
  std::vector<BatchItem> items;  // input order
  double validity_rate = 0.0;
};

BatchResult run_batch(const std::vector<DialogueExample>& examples, ChatClient& client, PromptVariant variant,
                      const BatchOptions& options = {});

}  // namespace faithtag::prompt
