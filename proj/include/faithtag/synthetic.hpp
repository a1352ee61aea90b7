#pragma once

#include <cstdint>
#include <vector>

#include "faithtag/corpus.hpp"

namespace faithtag {

/// Template dialogues about lending an object, each paired with summaries
/// corrupted by rule. Tags come from the rules:
///   name swapped -> W, object swapped -> OB, place or time changed -> C,
///   "will bring" -> "had brought" (N N), "on <time>" dropped -> M at [EOS].
/// Replacement words come from pools disjoint from the dialogue pools.
struct SyntheticConfig {
  int dialogues = 100;
  int summaries_per_dialogue = 2;
  int min_corruptions = 1;
  int max_corruptions = 2;
  std::uint64_t seed = 42;
};

std::vector<DialogueExample> generate_synthetic(const SyntheticConfig& config = {});

}  // namespace faithtag
