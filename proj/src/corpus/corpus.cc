#include "memeguard/corpus/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/random.h"
#include "memeguard/common/text.h"
#include "memeguard/corpus/image_hash.h"

namespace memeguard::corpus {

namespace fs = std::filesystem;

const PostRecord* Corpus::Find(const std::string& id) const {
  for (const PostRecord& post : records) {
    if (post.id == id) return &post;
  }
  return nullptr;
}

std::unordered_map<std::string, size_t> Corpus::IndexById() const {
  std::unordered_map<std::string, size_t> index;
  index.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) index.emplace(records[i].id, i);
  return index;
}

LoadResult LoadCorpus(const fs::path& path) {
  fs::path manifest = path;
  if (fs::is_directory(path)) manifest = path / "manifest.jsonl";
  if (!fs::exists(manifest)) {
    throw ValidationError("manifest not found: " + manifest.string());
  }
  LoadResult result;
  result.corpus.base_dir = manifest.parent_path();
  std::unordered_set<std::string> seen;
  result.errors = jsonl::ForEachRecord(
      manifest, [&](size_t, const jsonl::Json& record) {
        PostRecord post = PostFromJson(record);
        if (!seen.insert(post.id).second) {
          throw ValidationError("duplicate id '" + post.id + "'");
        }
        result.corpus.records.push_back(std::move(post));
      });
  for (const PostRecord& post : result.corpus.records) {
    if (!fs::exists(result.corpus.ImagePath(post))) {
      result.missing_images.push_back(post.id);
    }
  }
  return result;
}

void WriteManifest(const Corpus& corpus, const fs::path& manifest_path) {
  const fs::path out_dir = manifest_path.has_parent_path()
                               ? manifest_path.parent_path()
                               : fs::current_path();
  fs::create_directories(out_dir);
  std::vector<jsonl::Json> lines;
  lines.reserve(corpus.records.size());
  for (const PostRecord& post : corpus.records) {
    PostRecord copy = post;
    const fs::path absolute = fs::absolute(corpus.ImagePath(post));
    copy.image_path =
        fs::absolute(absolute).lexically_relative(fs::absolute(out_dir)).generic_string();
    lines.push_back(PostToJson(copy));
  }
  jsonl::WriteFile(manifest_path, lines);
}

Corpus FilterMinComments(const Corpus& corpus, int64_t min_comments) {
  Corpus out{corpus.base_dir, {}};
  for (const PostRecord& post : corpus.records) {
    if (post.comment_count >= min_comments) out.records.push_back(post);
  }
  return out;
}

std::vector<std::string> CleanTagList(const std::vector<std::string>& tags,
                                      const std::vector<std::string>& stoplist) {
  std::unordered_set<std::string> stop(stoplist.begin(), stoplist.end());
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  for (const std::string& raw : tags) {
    std::string tag = text::ToLowerAscii(text::Trim(raw));
    if (tag.empty() || stop.count(tag) || !seen.insert(tag).second) continue;
    out.push_back(std::move(tag));
  }
  return out;
}

Corpus CleanTags(const Corpus& corpus, const std::vector<std::string>& stoplist) {
  std::vector<std::string> normalized_stop;
  for (const std::string& s : stoplist) {
    normalized_stop.push_back(text::ToLowerAscii(text::Trim(s)));
  }
  Corpus out = corpus;
  for (PostRecord& post : out.records) {
    post.tags = CleanTagList(post.tags, normalized_stop);
  }
  return out;
}

std::vector<std::string> LoadStoplist(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open stoplist: " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    std::string entry = text::ToLowerAscii(text::Trim(line));
    if (entry.empty() || entry[0] == '#') continue;
    out.push_back(std::move(entry));
  }
  return out;
}

std::vector<DuplicateGroup> DedupExact(const Corpus& corpus) {
  // Key: title, then the sorted distinct tag set. '\x1f' cannot occur in a
  // cleaned tag, so the joined key is unambiguous.
  std::map<std::string, std::vector<std::string>> buckets;
  for (const PostRecord& post : corpus.records) {
    std::set<std::string> tag_set(post.tags.begin(), post.tags.end());
    std::string key = post.title;
    key.push_back('\x1e');
    for (const std::string& tag : tag_set) {
      key += tag;
      key.push_back('\x1f');
    }
    buckets[key].push_back(post.id);
  }
  std::vector<DuplicateGroup> groups;
  for (auto& [key, ids] : buckets) {
    if (ids.size() < 2) continue;
    std::sort(ids.begin(), ids.end());
    groups.push_back({std::move(ids)});
  }
  std::sort(groups.begin(), groups.end(),
            [](const DuplicateGroup& a, const DuplicateGroup& b) {
              return a.ids.front() < b.ids.front();
            });
  return groups;
}

DedupResult DedupPerceptual(const Corpus& corpus,
                            const std::vector<DuplicateGroup>& groups,
                            int threshold, const ImageHasher& hasher) {
  if (threshold < 0) throw ValidationError("threshold must be >= 0");
  const ImageHasher hash = hasher ? hasher : ImageHasher(DifferenceHashFile);
  const auto index = corpus.IndexById();

  DedupResult result;
  std::unordered_set<std::string> dropped;
  for (const DuplicateGroup& group : groups) {
    std::vector<std::string> ids = group.ids;
    std::sort(ids.begin(), ids.end());
    std::vector<uint64_t> kept;
    for (const std::string& id : ids) {
      auto it = index.find(id);
      if (it == index.end()) continue;
      std::optional<uint64_t> h = hash(corpus.ImagePath(corpus.records[it->second]));
      if (!h) {
        result.unreadable_ids.push_back(id);
        continue;
      }
      bool duplicate = std::any_of(kept.begin(), kept.end(), [&](uint64_t k) {
        return HammingDistance(k, *h) <= threshold;
      });
      if (duplicate) {
        dropped.insert(id);
      } else {
        kept.push_back(*h);
      }
    }
  }
  result.corpus.base_dir = corpus.base_dir;
  for (const PostRecord& post : corpus.records) {
    if (dropped.count(post.id)) {
      result.dropped_ids.push_back(post.id);
    } else {
      result.corpus.records.push_back(post);
    }
  }
  return result;
}

DedupResult Deduplicate(const Corpus& corpus, int threshold,
                        const ImageHasher& hasher) {
  return DedupPerceptual(corpus, DedupExact(corpus), threshold, hasher);
}

Corpus SplitTrainTest(const Corpus& corpus, const SplitOptions& options) {
  const size_t n = corpus.records.size();
  if (options.test_size >= n) {
    throw ValidationError(fmt::format("test_size {} must be smaller than corpus size {}",
                                      options.test_size, n));
  }
  if (!(options.coverage >= 0.0 && options.coverage <= 1.0)) {
    throw ValidationError("coverage must lie in [0, 1]");
  }

  std::map<std::string, std::vector<size_t>> posts_by_tag;
  for (size_t i = 0; i < n; ++i) {
    std::set<std::string> distinct(corpus.records[i].tags.begin(),
                                   corpus.records[i].tags.end());
    for (const std::string& tag : distinct) posts_by_tag[tag].push_back(i);
  }

  // Seeded shuffle rank; lower rank is preferred when candidates tie.
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  DeterministicRng rng(options.seed);
  rng.Shuffle(order);
  std::vector<size_t> rank(n);
  for (size_t r = 0; r < n; ++r) rank[order[r]] = r;

  std::unordered_map<std::string, long> deficit;
  std::vector<std::string> constrained;
  if (options.coverage > 0.0) {
    for (const auto& [tag, posts] : posts_by_tag) {
      if (posts.size() < options.min_tag_occurrences) continue;
      // Subtract a hair before ceil so that 0.15 * 20 (= 3.0000000000000004)
      // asks for 3, not 4.
      long required = static_cast<long>(
          std::ceil(options.coverage * static_cast<double>(posts.size()) - 1e-9));
      required = std::min<long>(required, static_cast<long>(posts.size()));
      if (required <= 0) continue;
      deficit[tag] = required;
      constrained.push_back(tag);
    }
  }
  std::stable_sort(constrained.begin(), constrained.end(),
                   [&](const std::string& a, const std::string& b) {
                     size_t fa = posts_by_tag[a].size();
                     size_t fb = posts_by_tag[b].size();
                     return fa != fb ? fa > fb : a < b;
                   });

  std::vector<bool> in_test(n, false);
  size_t test_count = 0;
  auto open_deficits = [&](size_t post) {
    int count = 0;
    for (const std::string& tag : corpus.records[post].tags) {
      auto it = deficit.find(tag);
      if (it != deficit.end() && it->second > 0) ++count;
    }
    return count;
  };
  auto assign = [&](size_t post) {
    in_test[post] = true;
    ++test_count;
    std::set<std::string> distinct(corpus.records[post].tags.begin(),
                                   corpus.records[post].tags.end());
    for (const std::string& tag : distinct) {
      auto it = deficit.find(tag);
      if (it != deficit.end()) --it->second;
    }
  };

  for (const std::string& tag : constrained) {
    while (deficit[tag] > 0) {
      if (test_count >= options.test_size) {
        throw ValidationError(fmt::format(
            "infeasible split: tag '{}' needs {} more test posts but the test "
            "split is full at {}",
            tag, deficit[tag], options.test_size));
      }
      size_t best = n;
      int best_score = -1;
      for (size_t post : posts_by_tag[tag]) {
        if (in_test[post]) continue;
        int score = open_deficits(post);
        if (score > best_score || (score == best_score && rank[post] < rank[best])) {
          best = post;
          best_score = score;
        }
      }
      if (best == n) {
        throw ValidationError("infeasible split: tag '" + tag + "' has no unassigned posts");
      }
      assign(best);
    }
  }
  for (size_t r = 0; r < n && test_count < options.test_size; ++r) {
    if (!in_test[order[r]]) assign(order[r]);
  }

  Corpus out = corpus;
  for (size_t i = 0; i < n; ++i) {
    out.records[i].split = in_test[i] ? Split::kTest : Split::kTrain;
  }
  return out;
}

const std::vector<std::string>& StatsRowOrder() {
  static const std::vector<std::string> kRows = {
      "normal", "toxic", "hateful", "dangerous", "offensive", "undecided"};
  return kRows;
}

CorpusStats ComputeStats(const Corpus& corpus) {
  CorpusStats stats;
  for (const std::string& row : StatsRowOrder()) stats.by_label[row] = {};
  std::set<std::string> vocabulary;
  auto bump = [](LabelCounts& c, const std::optional<Split>& split) {
    ++c.total;
    if (split == Split::kTrain) ++c.train;
    if (split == Split::kTest) ++c.test;
  };
  for (const PostRecord& post : corpus.records) {
    vocabulary.insert(post.tags.begin(), post.tags.end());
    bump(stats.all, post.split);
    if (!post.split) ++stats.unsplit;
    if (!post.stage1_label) {
      ++stats.unlabeled;
      continue;
    }
    bump(stats.by_label[std::string(ToString(*post.stage1_label))], post.split);
    if (post.stage2_label) {
      bump(stats.by_label[std::string(ToString(*post.stage2_label))], post.split);
    }
  }
  stats.tag_vocabulary = vocabulary.size();
  stats.duplicate_groups = DedupExact(corpus).size();
  return stats;
}

std::string FormatStatsTable(const CorpusStats& stats) {
  std::ostringstream out;
  out << fmt::format("{:<10} {:>7} {:>7} {:>7}\n", "label", "train", "test", "total");
  for (const std::string& row : StatsRowOrder()) {
    const LabelCounts& c = stats.by_label.at(row);
    out << fmt::format("{:<10} {:>7} {:>7} {:>7}\n", row, c.train, c.test, c.total);
  }
  out << fmt::format("{:<10} {:>7} {:>7} {:>7}\n", "Total", stats.all.train,
                     stats.all.test, stats.all.total);
  out << fmt::format("unlabeled: {}  unsplit: {}  tag vocabulary: {}  duplicate groups: {}\n",
                     stats.unlabeled, stats.unsplit, stats.tag_vocabulary,
                     stats.duplicate_groups);
  return out.str();
}

nlohmann::json StatsToJson(const CorpusStats& stats) {
  nlohmann::json j;
  for (const auto& [label, c] : stats.by_label) {
    j["labels"][label] = {{"train", c.train}, {"test", c.test}, {"total", c.total}};
  }
  j["total"] = {{"train", stats.all.train}, {"test", stats.all.test},
                {"total", stats.all.total}};
  j["unlabeled"] = stats.unlabeled;
  j["unsplit"] = stats.unsplit;
  j["tag_vocabulary"] = stats.tag_vocabulary;
  j["duplicate_groups"] = stats.duplicate_groups;
  return j;
}

}  // namespace memeguard::corpus
