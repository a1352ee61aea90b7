#include "faithtag/vocab.hpp"

namespace faithtag {

Vocab::Vocab() {
  for (const char* s : {"<s>", "<pad>", "</s>", "[SEP]", "[UNK]"}) add(s);
  add(std::string(kEosToken));
}

Vocab Vocab::build(const std::vector<DialogueExample>& examples) {
  Vocab v;
  for (const auto& ex : examples) {
    for (const auto& t : flatten_dialogue(ex.dialogue)) v.add(t);
    for (const auto& t : ex.summary.tokens) v.add(t);
    if (ex.gold_summary) {
      for (const auto& t : *ex.gold_summary) v.add(t);
    }
  }
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  if (tokens.size() < v.size()) throw CheckpointError("vocabulary is missing reserved entries");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (tokens[i] != v.tokens_[i]) throw CheckpointError("reserved vocabulary entry " + std::to_string(i) + " differs");
  }
  for (std::size_t i = v.size(); i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw CheckpointError("duplicate vocabulary entry '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

int Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocab::id(std::string_view token) const {
  // Control symbols are never produced from text.
  auto it = index_.find(std::string(token));
  return it == index_.end() || is_special(it->second) ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DimensionMismatch("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

}  // namespace faithtag
