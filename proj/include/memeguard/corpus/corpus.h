#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "memeguard/common/jsonl.h"
#include "memeguard/corpus/post_record.h"

namespace memeguard::corpus {

// An immutable collection of posts plus the directory their image paths are
// relative to. Operations below never mutate their input; they return new
// corpora, so a loaded Corpus can be shared across worker threads.
struct Corpus {
  std::filesystem::path base_dir;
  std::vector<PostRecord> records;

  std::filesystem::path ImagePath(const PostRecord& post) const {
    return base_dir / post.image_path;
  }
  const PostRecord* Find(const std::string& id) const;
  std::unordered_map<std::string, size_t> IndexById() const;
  size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

struct LoadResult {
  Corpus corpus;
  std::vector<jsonl::LineError> errors;     // skipped lines
  std::vector<std::string> missing_images;  // ids retained but flagged
};

// `path` is a manifest file or a directory containing manifest.jsonl.
// A missing manifest throws ValidationError.
LoadResult LoadCorpus(const std::filesystem::path& path);

// Writes the corpus as a manifest at `manifest_path`, rewriting image paths
// relative to the new manifest's directory.
void WriteManifest(const Corpus& corpus,
                   const std::filesystem::path& manifest_path);

Corpus FilterMinComments(const Corpus& corpus, int64_t min_comments = 2);

// Lowercases and trims tags, drops empties and stoplist members, and removes
// within-post duplicates keeping first occurrence.
std::vector<std::string> CleanTagList(const std::vector<std::string>& tags,
                                      const std::vector<std::string>& stoplist);
Corpus CleanTags(const Corpus& corpus, const std::vector<std::string>& stoplist);

// Reads one tag per line; blank lines and lines starting with '#' ignored.
std::vector<std::string> LoadStoplist(const std::filesystem::path& path);

// Candidate duplicates sharing title and tag set. Member ids are sorted;
// groups are ordered by their first id.
struct DuplicateGroup {
  std::vector<std::string> ids;
};

std::vector<DuplicateGroup> DedupExact(const Corpus& corpus);

// Returns the 64-bit hash of an image, or nullopt if it cannot be decoded.
using ImageHasher =
    std::function<std::optional<uint64_t>(const std::filesystem::path&)>;

struct DedupResult {
  Corpus corpus;
  std::vector<std::string> dropped_ids;
  std::vector<std::string> unreadable_ids;  // kept, flagged
};

// Within each group (ids in lexicographic order) keeps a record unless its
// hash lies within `threshold` bits of an already kept record. Records not
// in any group pass through. Unreadable images are always kept.
DedupResult DedupPerceptual(const Corpus& corpus,
                            const std::vector<DuplicateGroup>& groups,
                            int threshold = 0,
                            const ImageHasher& hasher = {});

// Exact-match grouping followed by perceptual dedup inside the groups.
DedupResult Deduplicate(const Corpus& corpus, int threshold = 0,
                        const ImageHasher& hasher = {});

struct SplitOptions {
  size_t test_size = 1000;
  double coverage = 0.15;
  uint64_t seed = 0;
  // Tags rarer than this carry no coverage constraint.
  size_t min_tag_occurrences = 4;
};

// Assigns every record to train or test. For each tag with at least
// `min_tag_occurrences` posts, at least ceil(coverage * occurrences) of them
// land in test. Tags are satisfied greedily in descending frequency; the
// remaining test slots are filled from a seeded shuffle. Throws
// ValidationError naming the first tag whose quota cannot be met.
Corpus SplitTrainTest(const Corpus& corpus, const SplitOptions& options);

struct LabelCounts {
  size_t train = 0;
  size_t test = 0;
  size_t total = 0;
};

struct CorpusStats {
  // Keys: normal, toxic, hateful, dangerous, offensive, undecided.
  std::map<std::string, LabelCounts> by_label;
  LabelCounts all;
  size_t unlabeled = 0;
  size_t unsplit = 0;
  size_t tag_vocabulary = 0;
  size_t duplicate_groups = 0;
};

CorpusStats ComputeStats(const Corpus& corpus);

// Row order follows the published label table.
const std::vector<std::string>& StatsRowOrder();
std::string FormatStatsTable(const CorpusStats& stats);
nlohmann::json StatsToJson(const CorpusStats& stats);

}  // namespace memeguard::corpus
