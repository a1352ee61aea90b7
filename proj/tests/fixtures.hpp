#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "faithtag/corpus.hpp"
#include "faithtag/vocab.hpp"

namespace fixtures {

using namespace faithtag;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("faithtag-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Dialogue mary_carter_dialogue() {
  return Dialogue{"mary-carter",
                  {{"Mary", "hey, im kinda broke, lend me a few box"},
                   {"Carter", "okay, give me an hour, im at the train station"},
                   {"Mary", "cool, thanks"}}};
}

/// "Adam will lend Mary a box ." tagged W O O O O OB O, M at the slot.
inline DialogueExample mary_carter_example() {
  DialogueExample ex;
  ex.dialogue = mary_carter_dialogue();
  ex.summary = make_summary({"Adam", "will", "lend", "Mary", "a", "box", "."},
                            {Tag::W, Tag::O, Tag::O, Tag::O, Tag::O, Tag::OB, Tag::O}, Tag::M);
  ex.summary.source_model = "reference";
  ex.gold_summary = std::vector<std::string>{"Carter", "will", "lend", "Mary", "money", "in", "an", "hour", "."};
  return ex;
}

inline std::vector<std::string> word_pool(std::size_t n, const std::string& prefix = "w") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

/// Default reserved entries plus `extra` words, so size() == 6 + extra.
inline Vocab small_vocab(std::size_t extra) {
  Vocab v;
  for (const auto& w : word_pool(extra)) v.add(w);
  return v;
}

/// Valid random tags for a summary of `n` tokens plus the slot.
inline std::vector<Tag> random_tags(std::mt19937_64& rng, std::size_t n) {
  std::vector<Tag> tags;
  for (std::size_t i = 0; i < n; ++i) tags.push_back(static_cast<Tag>(rng() % 5));
  tags.push_back(rng() % 2 ? Tag::M : Tag::O);
  return tags;
}

/// `dialogues` ids with 1-3 summaries each.
inline std::vector<DialogueExample> random_examples(std::mt19937_64& rng, std::size_t dialogues) {
  const auto words = word_pool(40);
  std::vector<DialogueExample> out;
  for (std::size_t d = 0; d < dialogues; ++d) {
    Dialogue dialogue;
    dialogue.id = "d" + std::to_string(d);
    const std::size_t turns = 1 + rng() % 4;
    for (std::size_t t = 0; t < turns; ++t) {
      std::string utt;
      const std::size_t len = 1 + rng() % 8;
      for (std::size_t k = 0; k < len; ++k) utt += (k ? " " : "") + words[rng() % words.size()];
      dialogue.turns.push_back({t % 2 ? "bob" : "ann", utt});
    }
    const std::size_t summaries = 1 + rng() % 3;
    for (std::size_t s = 0; s < summaries; ++s) {
      std::vector<std::string> tokens;
      const std::size_t len = 1 + rng() % 10;
      for (std::size_t k = 0; k < len; ++k) tokens.push_back(words[rng() % words.size()]);
      auto tags = random_tags(rng, len);
      const Tag eos = tags.back();
      tags.pop_back();
      DialogueExample ex;
      ex.dialogue = dialogue;
      ex.summary = make_summary(tokens, tags, eos);
      if (rng() % 2) ex.gold_summary = std::vector<std::string>{words[rng() % words.size()], "."};
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace fixtures
