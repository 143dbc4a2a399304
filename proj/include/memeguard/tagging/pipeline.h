#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memeguard/common/warnings.h"
#include "memeguard/corpus/corpus.h"
#include "memeguard/gateway/gateway.h"
#include "memeguard/tagging/templates.h"

namespace memeguard::tagging {

struct EnrichedContext {
  std::string caption;
  std::string lens_clean;
  std::map<std::string, std::string> tag_expansions;  // tag -> expansion
};

enum class SummaryKind { kGroundTruth, kGenerated };

std::string_view ToString(SummaryKind kind);
std::optional<SummaryKind> ParseSummaryKind(std::string_view text);

struct SummaryRecord {
  std::string post_id;
  SummaryKind kind = SummaryKind::kGroundTruth;
  std::string text;
  std::string model_id;

  bool operator==(const SummaryRecord&) const = default;
};

nlohmann::json SummaryToJson(const SummaryRecord& record);
SummaryRecord SummaryFromJson(const nlohmann::json& j);

// Summaries keyed by (post id, kind). Saved sorted so files diff cleanly.
class SummaryStore {
 public:
  SummaryStore() = default;
  SummaryStore(SummaryStore&& other) noexcept : records_(std::move(other.records_)) {}
  SummaryStore& operator=(SummaryStore&& other) noexcept {
    records_ = std::move(other.records_);
    return *this;
  }

  // Missing file loads as empty; malformed lines throw ValidationError.
  static SummaryStore Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;

  void Put(const SummaryRecord& record);
  std::optional<SummaryRecord> Get(const std::string& post_id, SummaryKind kind) const;
  std::vector<SummaryRecord> All() const;
  size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, SummaryKind>, SummaryRecord> records_;
};

struct TaggingOptions {
  int caption_max_tokens = 30;
  int summary_max_tokens = 150;
  int extract_max_tokens = 100;
  double temperature = 0.001;
  size_t max_tags = 15;
  size_t max_tag_chars = 80;
  // A response with no list separators longer than this is not a tag list.
  size_t max_unseparated_chars = 200;
  std::vector<std::string> stoplist;
  // Directory holding text-free copies of the images, same relative paths
  // as the manifest. Absent files fall back to the original with a warning.
  std::optional<std::filesystem::path> inpainted_dir;
  // Fetch search expansions for ground-truth prompts.
  bool expand_tags = true;
};

// Result of parsing an extraction response.
struct ParsedTags {
  std::vector<std::string> tags;
  bool parseable = true;
};

// Splits on commas and newlines, strips list markers and quotes, lowercases,
// drops empties, duplicates, stoplist members and over-long tags, and caps
// the list. See TaggingOptions for the limits.
ParsedTags ParseTagList(std::string_view response, const TaggingOptions& options,
                        Warnings* warnings = nullptr);

// Removes every case-insensitive occurrence of each tag from `text`,
// repeating until none is left.
std::string RedactTags(std::string text, const std::vector<std::string>& tags);

// The tag-generation pipeline: caption -> ground-truth or tagless summary ->
// extracted tags. All model traffic goes through the gateway, so runs over a
// frozen cache are deterministic.
class TaggingPipeline {
 public:
  TaggingPipeline(gateway::ModelGateway& gateway, const TemplateSet& templates,
                  TaggingOptions options = {});

  // Caption of the inpainted image if available, else of the original.
  std::string GenerateCaption(const corpus::Corpus& corpus, const corpus::PostRecord& post);

  // Caption, cleaned lens context and (for ground truth) tag expansions.
  EnrichedContext BuildContext(const corpus::Corpus& corpus, const corpus::PostRecord& post,
                               bool with_expansions);

  gateway::ChatRequest BuildGroundTruthPrompt(const corpus::Corpus& corpus,
                                              const corpus::PostRecord& post,
                                              const EnrichedContext& ctx) const;

  // No tags and no expansions; any tag string that still surfaces through
  // title, OCR, caption or lens text is redacted.
  gateway::ChatRequest BuildTaglessPrompt(const corpus::Corpus& corpus,
                                          const corpus::PostRecord& post,
                                          const EnrichedContext& ctx) const;

  SummaryRecord GenerateSummary(const corpus::Corpus& corpus, const corpus::PostRecord& post,
                                const EnrichedContext& ctx, SummaryKind kind);

  gateway::ChatRequest BuildExtractionPrompt(const std::string& summary, bool strict) const;

  // Retries once with the strict template when the first answer is
  // unparseable or yields no tags; then throws ExternalServiceError naming
  // the post.
  std::vector<std::string> ExtractTags(const SummaryRecord& summary);

  // Tagless summary then extraction. The summary is stored in `store` when
  // given.
  std::vector<std::string> PredictTags(const corpus::Corpus& corpus,
                                       const corpus::PostRecord& post,
                                       SummaryStore* store = nullptr);

  const TaggingOptions& options() const { return options_; }
  Warnings& warnings() { return gateway_.warnings(); }

 private:
  std::filesystem::path ImageFor(const corpus::Corpus& corpus,
                                 const corpus::PostRecord& post) const;

  gateway::ModelGateway& gateway_;
  const TemplateSet& templates_;
  TaggingOptions options_;
};

enum class FinetuneTask { kSummary, kTags };

struct ExportReport {
  size_t exported = 0;
  size_t skipped_missing_summary = 0;
  size_t skipped_not_train = 0;
};

// Writes {"input", "target"} lines for train-split posts. Summary task:
// tagless prompt -> ground-truth summary. Tags task: extraction prompt over
// the ground-truth summary -> ground-truth tags joined by ", ".
ExportReport ExportFinetuneData(const corpus::Corpus& corpus, const SummaryStore& summaries,
                                FinetuneTask task, TaggingPipeline& pipeline,
                                const std::filesystem::path& out);

}  // namespace memeguard::tagging
