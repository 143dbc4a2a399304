#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "memeguard/corpus/corpus.h"

namespace memeguard::metrics {

// Lowercases and strips plural endings word by word: "ies" -> "y",
// "sses" -> "ss", and a final "s" on words longer than three letters unless
// it follows s, u or i ("towers" -> "tower", "bus" and "isis" unchanged).
std::string LemmatizeTag(std::string_view tag);

struct TagPairCount {
  std::string a;  // a < b
  std::string b;
  size_t count = 0;
};

// Unordered pairs of distinct lemmatized tags within each post, counted
// across posts. Pairs below `min_count` are dropped; ranking is count
// descending, then (a, b) ascending.
std::vector<TagPairCount> Cooccurrence(const corpus::Corpus& corpus, size_t min_count = 1);

// Posts whose final label matches `label`: "toxic", "normal", a Stage II
// label, or "all".
bool HasLabel(const corpus::PostRecord& post, std::string_view label);

// Tag frequencies (one count per post) among posts with `label`, count
// descending then tag ascending; n = 0 keeps all.
std::vector<std::pair<std::string, size_t>> TopTags(const corpus::Corpus& corpus,
                                                    std::string_view label, size_t n);

}  // namespace memeguard::metrics
