#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memeguard/corpus/corpus.h"
#include "memeguard/exemplar/exemplar.h"
#include "memeguard/gateway/gateway.h"
#include "memeguard/metrics/classification.h"
#include "memeguard/tagging/templates.h"

namespace memeguard::detect {

// The labels a run chooses from, plus the system template that defines
// them. "I" and "II" are the ToxicTags stages; "fhm" is the binary
// hateful/not-hateful transfer setting.
struct LabelSpace {
  std::string name;
  std::vector<std::string> labels;
  std::string template_id;

  // "toxic or normal", "hateful, dangerous or offensive"
  std::string OptionsText() const;
};

LabelSpace StageOneSpace();
LabelSpace StageTwoSpace();
LabelSpace FhmSpace();
// "I", "II" (also "1", "2") or "fhm". Throws ValidationError.
LabelSpace LabelSpaceByName(std::string_view name);

// Gold label of `post` in `space`, or nullopt when the post does not take
// part: Stage II needs a toxic post with a decided Stage II label; FHM maps
// toxic -> hateful and normal -> not-hateful.
std::optional<std::string> GoldLabel(const corpus::PostRecord& post, const LabelSpace& space);

// Pool posts usable as exemplars for `space`: not in the test split and
// carrying a gold label there. Build the ExemplarSelector over this.
corpus::Corpus EligiblePool(const corpus::Corpus& pool, const LabelSpace& space);

struct ParsedLabel {
  std::optional<std::string> label;
  std::string error;  // why parsing failed
};

// Case-insensitive scan for the space's labels after replacing punctuation
// with spaces. Longer labels are matched first and consume their words, so
// "not hateful" is not also read as "hateful". Exactly one distinct label
// must occur.
ParsedLabel ParseLabel(std::string_view raw, const LabelSpace& space);

enum class UnparseablePolicy { kStrict, kDrop };
enum class PromptTags { kAuto, kNone, kGold, kPredicted };

std::optional<UnparseablePolicy> ParseUnparseablePolicy(std::string_view text);
std::optional<PromptTags> ParsePromptTags(std::string_view text);

struct DetectionConfig {
  LabelSpace space = StageOneSpace();
  exemplar::SelectionStrategy strategy;
  std::string model_id;
  UnparseablePolicy policy = UnparseablePolicy::kStrict;
  // Which tags the prompt shows for exemplars and query. Auto: predicted
  // tags for the pred_* strategies, gold tags otherwise.
  PromptTags prompt_tags = PromptTags::kAuto;
  double temperature = 0.001;
  int max_new_tokens = 30;
  int workers = 8;
  // Share of failed samples above which the run is marked invalid.
  double max_failure_rate = 0.10;

  nlohmann::json ToJson() const;
};

inline constexpr std::string_view kUnparseable = "unparseable";
inline constexpr std::string_view kFailed = "error";

struct PredictionRecord {
  std::string post_id;
  std::string gold;
  std::string predicted;  // a label, "unparseable" or "error"
  std::string raw;
  std::vector<std::string> exemplar_ids;
  double latency_ms = 0.0;
  int attempts = 0;
  std::string error;

  nlohmann::json ToJson() const;
  static PredictionRecord FromJson(const nlohmann::json& j);
};

// Assembles the classification chat: a system message with the label
// definitions and answer instruction, one user/assistant turn per exemplar
// (image, title, OCR, tags -> gold label), and the query as the last user
// turn.
class PromptBuilder {
 public:
  PromptBuilder(const tagging::TemplateSet& templates, const DetectionConfig& config,
                const exemplar::PredictedTags* predicted);

  gateway::ChatRequest Build(const corpus::Corpus& query_corpus, const corpus::PostRecord& query,
                             const corpus::Corpus& pool,
                             const std::vector<std::string>& exemplar_ids) const;

  // The same chat with the failed answer and a reminder appended.
  gateway::ChatRequest Retry(const gateway::ChatRequest& original,
                             const std::string& failed_answer) const;

 private:
  std::string RenderItem(const corpus::PostRecord& post) const;
  bool ShowPredictedTags() const;

  const tagging::TemplateSet& templates_;
  const DetectionConfig& config_;
  const exemplar::PredictedTags* predicted_;
};

struct BenchmarkResult {
  metrics::MetricReport report;
  std::vector<PredictionRecord> predictions;  // sorted by post id
  nlohmann::json header;
  size_t failures = 0;
  size_t unparseable = 0;
  bool valid = true;
};

// Inputs for one benchmark run. The test posts are the split=test records
// of `test` that have a gold label in the space.
struct BenchmarkInputs {
  const corpus::Corpus* test = nullptr;
  const corpus::Corpus* pool = nullptr;
  const exemplar::PredictedTags* predicted = nullptr;
};

BenchmarkResult RunBenchmark(gateway::ModelGateway& gateway, const tagging::TemplateSet& templates,
                             exemplar::ExemplarSelector& selector, const BenchmarkInputs& inputs,
                             const DetectionConfig& config);

// Scores prediction records the way RunBenchmark does: failed samples are
// left out; unparseable ones count as wrong (strict) or are left out (drop).
metrics::MetricReport ScorePredictions(const std::vector<PredictionRecord>& predictions,
                                       const LabelSpace& space, UnparseablePolicy policy);

// Header line {"header": {...}} then one record per line.
void WritePredictionFile(const std::filesystem::path& path, const nlohmann::json& header,
                         const std::vector<PredictionRecord>& predictions);
std::vector<PredictionRecord> ReadPredictionFile(const std::filesystem::path& path,
                                                 nlohmann::json* header = nullptr);

}  // namespace memeguard::detect
