#include "faithtag/prompt_tagger.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace faithtag::prompt {

using json = nlohmann::json;

std::string_view role_name(Role role) noexcept {
  switch (role) {
    case Role::System:
      return "system";
    case Role::User:
      return "user";
    case Role::Assistant:
      return "assistant";
  }
  return "user";
}

namespace {

struct VariantEntry {
  PromptVariant variant;
  std::string_view name;
};

constexpr VariantEntry kVariants[] = {
    {PromptVariant::Tagging2, "tagging-2"},         {PromptVariant::Tagging3, "tagging-3"},
    {PromptVariant::Tagging6, "tagging-6"},         {PromptVariant::Tagging8, "tagging-8"},
    {PromptVariant::Tagging9, "tagging-9"},         {PromptVariant::SummZero, "summ-zero"},
    {PromptVariant::SummOne, "summ-one"},           {PromptVariant::SummFew, "summ-few"},
    {PromptVariant::SummTagging, "summ-tagging"},   {PromptVariant::SummTaggingExplain, "summ-tagging-explain"},
};

bool is_punct_token(std::string_view t) { return t == "." || t == "," || t == "?" || t == "!"; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Content between the first two occurrences of `marker`, case-insensitive.
std::optional<std::string> marked_block(std::string_view text, std::string_view marker) {
  const std::string hay = lower(text);
  const std::string needle = lower(marker);
  const auto open = hay.find(needle);
  if (open == std::string::npos) return std::nullopt;
  const auto begin = open + needle.size();
  const auto close = hay.find(needle, begin);
  if (close == std::string::npos) return std::nullopt;
  return std::string(text.substr(begin, close - begin));
}

ParsedTagOutput fail(ParsedTagOutput out, std::string reason) {
  out.valid = false;
  out.failure_reason = std::move(reason);
  return out;
}

constexpr std::string_view kInlineReminder =
    "Your answer could not be read. Reply again with a line starting with Tags: and one word(TAG) item per "
    "summary token, ending with <EOS>(M) or <EOS>(O).";

}  // namespace

std::string_view variant_name(PromptVariant v) noexcept {
  for (const auto& e : kVariants) {
    if (e.variant == v) return e.name;
  }
  return "unknown";
}

PromptVariant parse_variant(std::string_view name) {
  for (const auto& e : kVariants) {
    if (e.name == name) return e.variant;
  }
  throw UnknownVariant("unknown prompt variant '" + std::string(name) + "'");
}

bool is_tagging_variant(PromptVariant v) noexcept {
  switch (v) {
    case PromptVariant::Tagging2:
    case PromptVariant::Tagging3:
    case PromptVariant::Tagging6:
    case PromptVariant::Tagging8:
    case PromptVariant::Tagging9:
      return true;
    default:
      return false;
  }
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (t == kEosToken) continue;
    if (!out.empty() && !is_punct_token(t)) out += ' ';
    out += t;
  }
  return out;
}

std::string quoted_dialogue(const Dialogue& dialogue) { return "\"" + dialogue_text(dialogue) + "\""; }

ChatTranscript build_tagging_prompt(PromptVariant variant, const Dialogue& dialogue,
                                    const std::vector<std::string>& summary_tokens) {
  const PromptTemplate& tpl = tagging_template(variant);
  ChatTranscript t;
  t.messages.push_back({Role::System, tpl.system});
  for (const auto& ex : tpl.examples) {
    t.messages.push_back({Role::User, ex.user});
    t.messages.push_back({Role::Assistant, ex.assistant});
  }
  std::string query;
  if (variant == PromptVariant::Tagging2) {
    query = "Dialogue --\n";
    for (const auto& turn : dialogue.turns) query += turn.speaker + " : " + turn.utterance + "\n";
    query += "Summary:\n";
    for (std::size_t i = 0; i < summary_tokens.size(); ++i) {
      if (i) query += ' ';
      query += summary_tokens[i] == kEosToken ? std::string("<EOS>") : summary_tokens[i];
    }
  } else {
    query = "Dialogue- " + quoted_dialogue(dialogue) + "\n\nSummary- \"" + detokenize(summary_tokens) + "\"";
  }
  t.messages.push_back({Role::User, std::move(query)});
  return t;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kBaselineInstruction =
    "Generate a summary of a length of exactly 10 to 15 words for the given set of dialogues.";

constexpr std::string_view kHallucinationInstruction =
    R"ft(Given a set of dialogues, the task is to generate a summary of 10-15 words by considering all the dialogues, and perform token-level classification on the summary based on whether it is hallucinated or not. Use the following tag classes to label each token of the summary.
O = Not Hallucinated,
W =  Wrong person reference,
C = Circumstantial error,
OB = Object error,
N = uncommon errors like tense errors
M = Missing information.
The tag M should only be added at the end of the sequence incase the summary is missing any information and not as a tag specific to a word in the summary.)ft";

constexpr std::string_view kExplainInstruction =
    "After the tags, explain them in a section that starts with \"Explanation - Let's think step by step.\"";

Dialogue hannah_dialogue() {
  return Dialogue{"hannah-amanda",
                  {{"Hannah", "Hey, do you have Betty's number?"},
                   {"Amanda", "Lemme check"},
                   {"Hannah", "GIF"},
                   {"Amanda", "Sorry, can't find it."},
                   {"Amanda", "Ask Larry"},
                   {"Amanda", "He called her last time we were at the park together"},
                   {"Hannah", "I don't know him well"},
                   {"Hannah", "GIF"},
                   {"Amanda", "Don't be shy, he's very nice"},
                   {"Hannah", "If you say so.."},
                   {"Hannah", "I'd rather you texted him"},
                   {"Amanda", "Just text him"},
                   {"Hannah", "Urgh.. Alright"},
                   {"Hannah", "Bye"},
                   {"Amanda", "Bye bye"}}};
}

constexpr std::string_view kHannahSummary =
    "Amanda can't find Betty's number. Larry called her last time they were at the park together. Amanda will "
    "text Larry.";
constexpr std::string_view kHannahTags = "O O O O O O O O O O O O O O O O O O W O O O O";
constexpr std::string_view kHannahExplanation =
    "Explanation - Let's think step by step. The dialogue is about Hannah asking for Betty's number to Amanda, who "
    "couldn't find it and suggests to ask Larry for it since he had called her(Betty) the last time they were in "
    "the park together. Hannah doesn't know him(Larry) well and is shy to text him, but Amanda asks her to do it "
    "anyway.  So according to the summary, \"Amanda will text Larry\" is incorrect. The way to correct this "
    "information is the token Amanda can be changed to Hannah. This is Wrong Reference (W) from the tokens "
    "described above. All other tokens are correct and are thus Not Hallucinated (O).";

std::string summary_query(const Dialogue& d) { return "Dialogue:\n" + quoted_dialogue(d) + "\nSummary:"; }

}  // namespace

const std::vector<SummaryShot>& default_summary_shots() {
  static const std::vector<SummaryShot> shots = {
      {Dialogue{"mary-carter",
                {{"Mary", "hey, im kinda broke, lend me a few box"},
                 {"Carter", "okay, give me an hour, im at the train station"},
                 {"Mary", "cool, thanks"}}},
       "Mary is broke and asks Carter for money. Carter is at the train station and will give it to her in an "
       "hour."},
      {Dialogue{"ernest-mike",
                {{"Ernest", "hey Mike, did you park your car on our street?"},
                 {"Mike", "no, took it into garage today"},
                 {"Ernest", "ok good"},
                 {"Mike", "why?"},
                 {"Ernest", "someone just crashed into a red honda looking just like yours"},
                 {"Mike", "lol lucky me"}}},
       "Mike took his car into the garage today. Someone crashed into a red Honda that looks like his."},
      {Dialogue{"anne-irene",
                {{"Anne", "You were right, he was lying to me :/"},
                 {"Irene", "Oh no, what happened?"},
                 {"Jane", "who? that Mark guy?"},
                 {"Anne", "yeah, he told me he's 30, today I saw his passport - he's 40"},
                 {"Irene", "You sure it's so important?"},
                 {"Anne", "he lied to me Irene"}}},
       "Mark lied to Anne about his age. He is 40, not 30."},
      {hannah_dialogue(),
       "Amanda can't find Betty's number. Larry called her last time they were at the park together. Hannah will "
       "text Larry."},
  };
  return shots;
}

ChatTranscript build_summarization_prompt(PromptVariant variant, const Dialogue& dialogue, int shots,
                                          const std::vector<SummaryShot>& pool) {
  if (is_tagging_variant(variant)) {
    throw UnknownVariant(std::string(variant_name(variant)) + " is not a summarization prompt");
  }
  ChatTranscript t;
  const bool tagging = variant == PromptVariant::SummTagging || variant == PromptVariant::SummTaggingExplain;
  if (!tagging) {
    const bool ok = (variant == PromptVariant::SummZero && shots == 0) ||
                    (variant == PromptVariant::SummOne && shots == 1) ||
                    (variant == PromptVariant::SummFew && shots >= 2);
    if (!ok) {
      throw BadShots(std::string(variant_name(variant)) + " does not take " + std::to_string(shots) + " shots");
    }
    if (static_cast<std::size_t>(shots) > pool.size()) {
      throw BadShots("only " + std::to_string(pool.size()) + " worked examples are available");
    }
    t.messages.push_back({Role::System, std::string(kBaselineInstruction)});
    for (int i = 0; i < shots; ++i) {
      const auto& shot = pool[static_cast<std::size_t>(i)];
      t.messages.push_back({Role::User, summary_query(shot.dialogue)});
      t.messages.push_back({Role::Assistant, shot.summary});
    }
    t.messages.push_back({Role::User, summary_query(dialogue)});
    return t;
  }

  if (shots != 0 && shots != 1) {
    throw BadShots(std::string(variant_name(variant)) + " takes 0 or 1 shots, not " + std::to_string(shots));
  }
  const bool explain = variant == PromptVariant::SummTaggingExplain;
  std::string system(kHallucinationInstruction);
  if (explain) system += "\n" + std::string(kExplainInstruction);
  t.messages.push_back({Role::System, std::move(system)});
  std::string query;
  if (shots == 1) {
    t.messages.push_back({Role::User, "Dialogue- \n" + quoted_dialogue(hannah_dialogue())});
    std::string answer = "Summary- \"" + std::string(kHannahSummary) + "\"\n\nTags- \"" + std::string(kHannahTags) + "\"";
    if (explain) answer += "\n\n" + std::string(kHannahExplanation);
    t.messages.push_back({Role::Assistant, std::move(answer)});
    query = "Similarly, for the next dialogue, generate summary of all the dialogues and tags for the summary.";
    if (explain) query += " Think step by step to explain it.";
    query += "\n\n";
  }
  query += "Dialogue- \n" + quoted_dialogue(dialogue) + "\n\nSummary- \nTags- ";
  if (explain) query += "\nExplanation- ";
  t.messages.push_back({Role::User, std::move(query)});
  return t;
}

// ---------------------------------------------------------------------------

std::vector<Tag> ParsedTagOutput::summary_tags() const {
  if (!valid || !missing_info) return {};
  std::vector<Tag> out = tags;
  out.push_back(*missing_info ? Tag::M : Tag::O);
  return out;
}

ParsedTagOutput parse_tagger_output(std::string_view text, std::size_t expected_token_count) {
  ParsedTagOutput out;
  const auto tg = marked_block(text, "<TG>");
  if (!tg) return fail(std::move(out), "missing TG block");
  try {
    auto inline_tags = parse_inline_tagged(*tg);
    out.tokens = std::move(inline_tags.tokens);
    out.tags = std::move(inline_tags.tags);
  } catch (const MalformedInlineTag&) {
    return fail(std::move(out), "malformed TG block");
  }
  if (std::find(out.tags.begin(), out.tags.end(), Tag::M) != out.tags.end()) {
    return fail(std::move(out), "M inside TG block");
  }
  const auto mi = marked_block(text, "<MI>");
  if (!mi) return fail(std::move(out), "missing MI block");
  const std::string answer = lower(trim(*mi));
  if (answer == "yes") {
    out.missing_info = true;
  } else if (answer == "no") {
    out.missing_info = false;
  } else {
    return fail(std::move(out), "malformed MI block");
  }
  if (out.tags.size() != expected_token_count) return fail(std::move(out), "length mismatch");
  out.valid = true;
  return out;
}

ParsedTagOutput parse_inline_answer(std::string_view text, std::size_t expected_token_count) {
  ParsedTagOutput out;
  const std::string hay = lower(text);
  const auto at = hay.rfind("tags:");
  if (at == std::string::npos) return fail(std::move(out), "missing Tags line");
  auto begin = at + 5;
  auto end = text.find("\n\n", begin);
  std::string body = trim(text.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin));
  InlineTagged parsed;
  try {
    parsed = parse_inline_tagged(body);
  } catch (const MalformedInlineTag&) {
    return fail(std::move(out), "malformed Tags line");
  }
  if (parsed.tokens.empty() || (parsed.tokens.back() != "<EOS>" && parsed.tokens.back() != kEosToken)) {
    return fail(std::move(out), "missing EOS tag");
  }
  const Tag eos = parsed.tags.back();
  if (eos != Tag::M && eos != Tag::O) return fail(std::move(out), "malformed EOS tag");
  parsed.tokens.pop_back();
  parsed.tags.pop_back();
  out.tokens = std::move(parsed.tokens);
  out.tags = std::move(parsed.tags);
  out.missing_info = eos == Tag::M;
  if (std::find(out.tags.begin(), out.tags.end(), Tag::M) != out.tags.end()) {
    return fail(std::move(out), "M before EOS");
  }
  if (out.tags.size() != expected_token_count) return fail(std::move(out), "length mismatch");
  out.valid = true;
  return out;
}

std::string extract_summary(std::string_view reply) {
  const std::string hay = lower(reply);
  std::size_t begin = 0;
  for (std::string_view marker : {"summary-", "summary:"}) {
    const auto at = hay.find(marker);
    if (at != std::string::npos) {
      begin = at + marker.size();
      break;
    }
  }
  std::size_t end = reply.size();
  for (std::string_view marker : {"tags-", "tags:", "explanation"}) {
    const auto at = hay.find(marker, begin);
    if (at != std::string::npos) end = std::min(end, at);
  }
  std::string s = trim(reply.substr(begin, end - begin));
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = trim(std::string_view(s).substr(1, s.size() - 2));
  return s;
}

// ---------------------------------------------------------------------------

ScriptedClient::ScriptedClient(std::map<std::string, std::vector<std::string>> replies)
    : replies_(std::move(replies)) {}

ScriptedClient ScriptedClient::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(1, std::string("invalid fixture JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError(1, "fixture must map example ids to replies");
  std::map<std::string, std::vector<std::string>> replies;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it->is_string()) {
      replies[it.key()] = {it->get<std::string>()};
    } else if (it->is_array() && !it->empty() &&
               std::all_of(it->begin(), it->end(), [](const json& v) { return v.is_string(); })) {
      replies[it.key()] = it->get<std::vector<std::string>>();
    } else {
      throw SchemaError(1, "reply for '" + it.key() + "' must be a string or a non-empty list of strings");
    }
  }
  return ScriptedClient(std::move(replies));
}

ScriptedClient ScriptedClient::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string ScriptedClient::send(const ChatTranscript&, const RequestContext& context) {
  auto it = replies_.find(context.example_id + "#" + std::to_string(context.index));
  if (it == replies_.end()) it = replies_.find(context.example_id);
  if (it == replies_.end()) throw ClientError(context.example_id, "no scripted reply");
  const auto& list = it->second;
  return list[std::min(static_cast<std::size_t>(std::max(context.attempt, 0)), list.size() - 1)];
}

// ---------------------------------------------------------------------------

namespace {

BatchItem run_one(const DialogueExample& ex, std::size_t index, ChatClient& client, PromptVariant variant,
                  int retry_limit) {
  BatchItem item;
  item.record.dialogue_id = ex.dialogue.id;
  item.record.tokens = ex.summary.tokens;
  for (Tag t : ex.summary.tags) item.record.gold_tags.push_back(base_id(t));

  const std::size_t expected = ex.summary.tokens.empty() ? 0 : ex.summary.tokens.size() - 1;
  const bool inline_format = variant == PromptVariant::Tagging2;
  ChatTranscript transcript = build_tagging_prompt(variant, ex.dialogue, ex.summary.tokens);

  for (int attempt = 0; attempt <= retry_limit; ++attempt) {
    RequestContext ctx{ex.dialogue.id, index, attempt};
    try {
      item.last_reply = client.send(transcript, ctx);
    } catch (const ClientError&) {
      throw;
    } catch (const std::exception& e) {
      throw ClientError(ex.dialogue.id, e.what());
    }
    ++item.attempts;
    item.parsed = inline_format ? parse_inline_answer(item.last_reply, expected)
                                : parse_tagger_output(item.last_reply, expected);
    if (item.parsed.valid) {
      const auto tags = item.parsed.summary_tags();
      if (!summary_problems(TaggedSummary{ex.summary.tokens, tags, std::nullopt}).empty()) {
        item.parsed.valid = false;
        item.parsed.failure_reason = "invalid tags";
      }
    }
    if (item.parsed.valid) break;
    transcript.messages.push_back({Role::Assistant, item.last_reply});
    transcript.messages.push_back({Role::User, std::string(inline_format ? kInlineReminder : kFormatReminder)});
  }

  item.record.valid = item.parsed.valid;
  item.record.failure_reason = item.parsed.failure_reason;
  if (item.parsed.valid) {
    for (Tag t : item.parsed.summary_tags()) item.record.pred_tags.push_back(base_id(t));
  }
  return item;
}

}  // namespace

BatchResult run_batch(const std::vector<DialogueExample>& examples, ChatClient& client, PromptVariant variant,
                      const BatchOptions& options) {
  if (!is_tagging_variant(variant)) {
    throw UnknownVariant(std::string(variant_name(variant)) + " is not a tagging prompt");
  }
  if (options.retry_limit < 0) throw BadShots("retry_limit must be non-negative");
  BatchResult result;
  result.items.resize(examples.size());
  std::vector<std::exception_ptr> errors(examples.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < examples.size(); i = next++) {
      try {
        result.items[i] = run_one(examples[i], i, client, variant, options.retry_limit);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, options.concurrency));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, examples.size()); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::size_t valid = 0;
  for (const auto& item : result.items) valid += item.parsed.valid ? 1 : 0;
  result.validity_rate = examples.empty() ? 0.0 : static_cast<double>(valid) / static_cast<double>(examples.size());
  return result;
}

}  // namespace faithtag::prompt
