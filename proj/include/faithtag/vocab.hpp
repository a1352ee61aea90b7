#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "faithtag/corpus.hpp"

namespace faithtag {

/// Word-level vocabulary. Ids 0-3 are control symbols; real tokens start at 4,
/// beginning with [UNK] and the literal [EOS] summary slot.
class Vocab {
 public:
  static constexpr int kBos = 0;
  static constexpr int kPad = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;
  static constexpr int kUnk = 4;
  static constexpr int kEosSlot = 5;
  static constexpr int kFirstRealId = 4;

  Vocab();

  /// Every token of dialogues, summaries and gold summaries, in first-seen order.
  static Vocab build(const std::vector<DialogueExample>& examples);
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  int add(const std::string& token);
  int id(std::string_view token) const;  // kUnk when unknown
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  static constexpr bool is_special(int id) { return id >= 0 && id < kFirstRealId; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace faithtag
