#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memeguard/common/labels.h"
#include "memeguard/corpus/corpus.h"
#include "memeguard/metrics/classification.h"

struct sqlite3;

namespace memeguard::annotation {

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct AnnotatorProfile {
  std::string id;
  std::string handle;  // display name only; never a platform username
  int daily_cap = 50;
  bool active = true;

  nlohmann::json ToJson() const;
  static AnnotatorProfile FromJson(const nlohmann::json& j);
};

// Rejects empty ids, caps below 1, and handles that look like platform
// usernames ("u/x", "/u/x", "@x").
void ValidateAnnotator(const AnnotatorProfile& profile);

struct AnnotationRecord {
  std::string sample_id;
  std::string annotator_id;
  Stage stage = Stage::kI;
  std::string label;
  std::string submitted_at;  // ISO-8601 with the service offset

  nlohmann::json ToJson() const;
  static AnnotationRecord FromJson(const nlohmann::json& j);
};

struct Ratings {
  int completeness = 0;
  int fluency = 0;
  int grammar = 0;
};

struct Assignment {
  std::string sample_id;
  std::vector<std::string> annotators;  // exactly three, distinct
};

struct BatchReport {
  int64_t batch_id = 0;
  Stage stage = Stage::kI;
  size_t n_tasks = 0;
  std::map<std::string, size_t> per_annotator;  // tasks in this batch
  size_t load_spread = 0;                        // max - min over per_annotator

  nlohmann::json ToJson() const;
};

// What an annotator sees: image reference, title, tags and OCR text. No
// platform URL, no handles.
struct TaskView {
  std::string sample_id;
  Stage stage = Stage::kI;
  std::string title;
  std::vector<std::string> tags;
  std::string ocr_text;
  std::string media_url;
  std::vector<std::string> allowed_labels;

  nlohmann::json ToJson() const;
};

struct NextTask {
  std::optional<TaskView> task;
  std::string reason;  // "cap reached" or "no tasks" when task is empty
};

struct Progress {
  int submitted_today = 0;
  int cap = 0;
  int remaining_total = 0;  // assigned and unanswered, all days
};

struct FinalizeResult {
  Stage stage = Stage::kI;
  std::map<std::string, std::string> labels;  // sample -> final label
  std::vector<std::string> undecided;
  // Samples without exactly three records. When non-empty nothing was
  // written.
  std::vector<std::string> blocked;

  nlohmann::json ToJson() const;
};

struct RatingReport {
  double completeness = 0.0;
  double fluency = 0.0;
  double grammar = 0.0;
  size_t n = 0;

  nlohmann::json ToJson() const;
};

struct PilotRow {
  size_t compared = 0;
  size_t agreed = 0;
};

// Items x categories count matrix for Fleiss' kappa, categories in the
// stage's assignable order. Every sample must carry exactly three records
// for `stage`; otherwise ValidationError lists the offenders.
std::vector<std::vector<int>> CountMatrix(const std::vector<AnnotationRecord>& records,
                                          Stage stage);
metrics::AgreementReport AgreementFromRecords(const std::vector<AnnotationRecord>& records,
                                              Stage stage);
std::vector<AnnotationRecord> LoadAnnotationRecords(const std::filesystem::path& path);

struct StoreOptions {
  Clock clock;  // defaults to system_clock::now
  // Fixed offset of the service-local day from UTC, in minutes.
  int utc_offset_minutes = 0;
};

// SQLite-backed annotation state. One connection, serialized by a mutex;
// every write runs in its own transaction. The annotations table is
// append-only (triggers abort UPDATE and DELETE).
class AnnotationStore {
 public:
  AnnotationStore(const std::filesystem::path& db_path, StoreOptions options = {});
  ~AnnotationStore();
  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  void AddAnnotator(const AnnotatorProfile& profile);
  std::vector<AnnotatorProfile> Annotators();

  // Registers posts as annotatable samples (insert or refresh of the
  // display fields). Image paths are resolved against the corpus base dir.
  void ImportSamples(const corpus::Corpus& corpus);
  // Ground-truth summary shown for rating; required before RateSummary.
  void SetSummary(const std::string& sample_id, const std::string& summary);
  std::optional<std::filesystem::path> MediaPath(const std::string& sample_id);

  BatchReport CreateBatch(Stage stage, const std::vector<Assignment>& assignments);

  NextTask GetNextTask(const std::string& annotator_id);
  void SubmitAnnotation(const std::string& annotator_id, const std::string& sample_id,
                        Stage stage, const std::string& label);
  Progress GetProgress(const std::string& annotator_id);

  FinalizeResult FinalizeLabels(Stage stage);
  // Final labels written so far (sample -> label).
  std::map<std::string, std::string> FinalLabels(Stage stage);
  // Copies final labels onto matching posts. Stage II labels are only set
  // on posts whose Stage I label is toxic.
  corpus::Corpus ApplyFinalLabels(const corpus::Corpus& corpus);

  metrics::AgreementReport ComputeAgreement(Stage stage);
  std::vector<AnnotationRecord> Records(std::optional<Stage> stage = std::nullopt);

  void RateSummary(const std::string& annotator_id, const std::string& sample_id,
                   const Ratings& ratings);
  RatingReport SummaryRatingReport();

  // Per-annotator agreement with expert labels for a pilot batch. No
  // gating: the caller decides what to do with the numbers.
  std::map<std::string, PilotRow> CompareWithExperts(
      Stage stage, const std::map<std::string, std::string>& expert_labels);

  // Service-local calendar day of `t`, "YYYY-MM-DD".
  std::string DayOf(std::chrono::system_clock::time_point t) const;
  std::string Today() const;

 private:
  void Exec(const char* sql);
  void RequireAnnotator(const std::string& annotator_id, AnnotatorProfile* out);
  int CountToday(const std::string& annotator_id, const std::string& day);
  std::string Timestamp(std::chrono::system_clock::time_point t) const;

  sqlite3* db_ = nullptr;
  StoreOptions options_;
  std::mutex mu_;
};

}  // namespace memeguard::annotation
