#include "memeguard/metrics/analysis.h"

#include <algorithm>
#include <map>
#include <set>

#include "memeguard/common/errors.h"
#include "memeguard/common/text.h"

namespace memeguard::metrics {
namespace {

std::string LemmatizeWord(std::string w) {
  auto ends = [&](std::string_view s) {
    return w.size() >= s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0;
  };
  if (w.size() > 4 && ends("ies")) {
    w.resize(w.size() - 3);
    w += 'y';
  } else if (ends("sses")) {
    w.resize(w.size() - 2);
  } else if (w.size() > 3 && ends("s")) {
    char before = w[w.size() - 2];
    if (before != 's' && before != 'u' && before != 'i') w.pop_back();
  }
  return w;
}

}  // namespace

std::string LemmatizeTag(std::string_view tag) {
  std::vector<std::string> words;
  for (auto& w : text::SplitAny(text::ToLowerAscii(text::Trim(tag)), " \t")) {
    if (!w.empty()) words.push_back(LemmatizeWord(w));
  }
  return text::Join(words, " ");
}

std::vector<TagPairCount> Cooccurrence(const corpus::Corpus& corpus, size_t min_count) {
  std::map<std::pair<std::string, std::string>, size_t> counts;
  for (const auto& post : corpus.records) {
    std::set<std::string> lemmas;
    for (const auto& t : post.tags) {
      std::string l = LemmatizeTag(t);
      if (!l.empty()) lemmas.insert(l);
    }
    for (auto i = lemmas.begin(); i != lemmas.end(); ++i) {
      for (auto j = std::next(i); j != lemmas.end(); ++j) ++counts[{*i, *j}];
    }
  }
  std::vector<TagPairCount> out;
  for (const auto& [pair, count] : counts) {
    if (count >= min_count) out.push_back({pair.first, pair.second, count});
  }
  std::stable_sort(out.begin(), out.end(), [](const TagPairCount& x, const TagPairCount& y) {
    return x.count > y.count;
  });
  return out;
}

bool HasLabel(const corpus::PostRecord& post, std::string_view label) {
  if (label == "all") return true;
  if (label == "toxic" || label == "normal") {
    return post.stage1_label && ToString(*post.stage1_label) == label;
  }
  if (ParseStage2Label(label)) {
    return post.stage2_label && ToString(*post.stage2_label) == label;
  }
  throw ValidationError("unknown label filter '" + std::string(label) + "'");
}

std::vector<std::pair<std::string, size_t>> TopTags(const corpus::Corpus& corpus,
                                                    std::string_view label, size_t n) {
  std::map<std::string, size_t> counts;
  for (const auto& post : corpus.records) {
    if (!HasLabel(post, label)) continue;
    std::set<std::string> seen;
    for (const auto& t : post.tags) {
      std::string tag = text::ToLowerAscii(text::Trim(t));
      if (!tag.empty() && seen.insert(tag).second) ++counts[tag];
    }
  }
  std::vector<std::pair<std::string, size_t>> out(counts.begin(), counts.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  if (n > 0 && out.size() > n) out.resize(n);
  return out;
}

}  // namespace memeguard::metrics
