#include "memeguard/annotation/store.h"

#include <sqlite3.h>

#include <algorithm>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/text.h"

namespace memeguard::annotation {
namespace {

using nlohmann::json;

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS annotators (
  id TEXT PRIMARY KEY,
  handle TEXT NOT NULL,
  daily_cap INTEGER NOT NULL CHECK (daily_cap >= 1),
  active INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS samples (
  id TEXT PRIMARY KEY,
  image_path TEXT NOT NULL,
  title TEXT NOT NULL,
  ocr_text TEXT NOT NULL,
  tags TEXT NOT NULL,
  summary TEXT,
  stage1_final TEXT,
  stage2_final TEXT
);
CREATE TABLE IF NOT EXISTS batches (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  stage TEXT NOT NULL,
  created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS tasks (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  batch_id INTEGER NOT NULL REFERENCES batches(id),
  sample_id TEXT NOT NULL REFERENCES samples(id),
  annotator_id TEXT NOT NULL REFERENCES annotators(id),
  stage TEXT NOT NULL,
  UNIQUE (sample_id, annotator_id, stage)
);
CREATE TABLE IF NOT EXISTS annotations (
  sample_id TEXT NOT NULL,
  annotator_id TEXT NOT NULL,
  stage TEXT NOT NULL,
  label TEXT NOT NULL,
  submitted_at TEXT NOT NULL,
  day TEXT NOT NULL,
  PRIMARY KEY (sample_id, annotator_id, stage)
);
CREATE INDEX IF NOT EXISTS annotations_by_day ON annotations (annotator_id, day);
CREATE TRIGGER IF NOT EXISTS annotations_no_update BEFORE UPDATE ON annotations
BEGIN SELECT RAISE(ABORT, 'annotation records are append-only'); END;
CREATE TRIGGER IF NOT EXISTS annotations_no_delete BEFORE DELETE ON annotations
BEGIN SELECT RAISE(ABORT, 'annotation records are append-only'); END;
CREATE TABLE IF NOT EXISTS ratings (
  sample_id TEXT NOT NULL,
  annotator_id TEXT NOT NULL,
  completeness INTEGER NOT NULL,
  fluency INTEGER NOT NULL,
  grammar INTEGER NOT NULL,
  submitted_at TEXT NOT NULL,
  PRIMARY KEY (sample_id, annotator_id)
);
)sql";

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw std::runtime_error(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& Bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Statement& Bind(int i, int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  Statement& BindNull(int i) {
    sqlite3_bind_null(stmt_, i);
    return *this;
  }

  // True while rows remain.
  bool Step() {
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    if (rc == SQLITE_CONSTRAINT) throw ConflictError(sqlite3_errmsg(db_));
    throw std::runtime_error(std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  void Run() {
    while (Step()) {
    }
  }

  std::string Text(int col) const {
    auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
    return p ? std::string(p, sqlite3_column_bytes(stmt_, col)) : std::string();
  }
  bool IsNull(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
  int64_t Int(int col) const { return sqlite3_column_int64(stmt_, col); }
  double Double(int col) const { return sqlite3_column_double(stmt_, col); }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

// Rolls back unless Commit() was reached.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { Exec("BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void Commit() {
    Exec("COMMIT");
    done_ = true;
  }

 private:
  void Exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw std::runtime_error("sqlite: " + msg);
    }
  }
  sqlite3* db_;
  bool done_ = false;
};

Stage StageFrom(const std::string& s) {
  auto stage = ParseStage(s);
  if (!stage) throw ValidationError("unknown stage '" + s + "'");
  return *stage;
}

std::string StageName(Stage stage) { return std::string(ToString(stage)); }

void RequireAssignable(Stage stage, const std::string& label) {
  if (label == kUndecided) {
    throw ValidationError("'undecided' is assigned by finalization, not by annotators");
  }
  const auto& allowed = AssignableLabels(stage);
  if (std::find(allowed.begin(), allowed.end(), label) == allowed.end()) {
    throw ValidationError(fmt::format("label '{}' is not allowed at stage {} (expected {})",
                                      label, StageName(stage), text::Join(allowed, ", ")));
  }
}

}  // namespace

json AnnotatorProfile::ToJson() const {
  return {{"id", id}, {"handle", handle}, {"daily_cap", daily_cap}, {"active", active}};
}

AnnotatorProfile AnnotatorProfile::FromJson(const json& j) {
  AnnotatorProfile p;
  try {
    p.id = j.at("id").get<std::string>();
    p.handle = j.value("handle", p.id);
    p.daily_cap = j.value("daily_cap", 50);
    p.active = j.value("active", true);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad annotator: ") + e.what());
  }
  return p;
}

void ValidateAnnotator(const AnnotatorProfile& p) {
  if (text::Trim(p.id).empty()) throw ValidationError("annotator id is empty");
  if (p.daily_cap < 1) throw ValidationError("daily_cap must be at least 1");
  static const std::regex kUsername(R"((^|\s)(/?u/\w|@\w))", std::regex::icase);
  if (std::regex_search(p.handle, kUsername)) {
    throw ValidationError("annotator handle must not be a platform username");
  }
}

json AnnotationRecord::ToJson() const {
  return {{"sample", sample_id},
          {"annotator", annotator_id},
          {"stage", StageName(stage)},
          {"label", label},
          {"submitted_at", submitted_at}};
}

AnnotationRecord AnnotationRecord::FromJson(const json& j) {
  AnnotationRecord r;
  try {
    r.sample_id = j.at("sample").get<std::string>();
    r.annotator_id = j.at("annotator").get<std::string>();
    r.stage = StageFrom(j.at("stage").get<std::string>());
    r.label = j.at("label").get<std::string>();
    r.submitted_at = j.value("submitted_at", "");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad annotation record: ") + e.what());
  }
  return r;
}

json BatchReport::ToJson() const {
  return {{"batch_id", batch_id},
          {"stage", StageName(stage)},
          {"n_tasks", n_tasks},
          {"per_annotator", per_annotator},
          {"load_spread", load_spread}};
}

json TaskView::ToJson() const {
  return {{"sample", sample_id},     {"stage", StageName(stage)}, {"title", title},
          {"tags", tags},            {"ocr_text", ocr_text},      {"media_url", media_url},
          {"allowed_labels", allowed_labels}};
}

json FinalizeResult::ToJson() const {
  return {{"stage", StageName(stage)},
          {"labels", labels},
          {"undecided", undecided},
          {"blocked", blocked}};
}

json RatingReport::ToJson() const {
  return {{"completeness", completeness}, {"fluency", fluency}, {"grammar", grammar}, {"n", n}};
}

std::vector<std::vector<int>> CountMatrix(const std::vector<AnnotationRecord>& records,
                                          Stage stage) {
  const auto& categories = AssignableLabels(stage);
  std::map<std::string, std::vector<int>> rows;
  std::map<std::string, std::set<std::string>> raters;
  for (const auto& r : records) {
    if (r.stage != stage) continue;
    RequireAssignable(stage, r.label);
    if (!raters[r.sample_id].insert(r.annotator_id).second) {
      throw ValidationError(fmt::format("annotator {} rated sample {} twice", r.annotator_id,
                                        r.sample_id));
    }
    auto& row = rows[r.sample_id];
    row.resize(categories.size(), 0);
    auto at = std::find(categories.begin(), categories.end(), r.label) - categories.begin();
    ++row[at];
  }
  std::vector<std::string> bad;
  std::vector<std::vector<int>> out;
  for (auto& [sample, row] : rows) {
    if (raters[sample].size() != 3) bad.push_back(sample);
    out.push_back(std::move(row));
  }
  if (!bad.empty()) {
    throw ValidationError("samples without exactly three records: " + text::Join(bad, ", "));
  }
  if (out.empty()) throw ValidationError("no annotation records for stage " + StageName(stage));
  return out;
}

metrics::AgreementReport AgreementFromRecords(const std::vector<AnnotationRecord>& records,
                                              Stage stage) {
  return metrics::FleissKappa(CountMatrix(records, stage));
}

std::vector<AnnotationRecord> LoadAnnotationRecords(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  auto errors = jsonl::ForEachRecord(
      path, [&](size_t, const json& j) { out.push_back(AnnotationRecord::FromJson(j)); });
  if (!errors.empty()) {
    throw ValidationError(fmt::format("{}:{}: {}", path.string(), errors[0].line_number,
                                      errors[0].message));
  }
  return out;
}

AnnotationStore::AnnotationStore(const std::filesystem::path& db_path, StoreOptions options)
    : options_(std::move(options)) {
  if (!options_.clock) options_.clock = [] { return std::chrono::system_clock::now(); };
  if (sqlite3_open(db_path.string().c_str(), &db_) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw ValidationError("cannot open annotation store " + db_path.string() + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  Exec("PRAGMA foreign_keys = ON");
  Exec(kSchema);
}

AnnotationStore::~AnnotationStore() { sqlite3_close(db_); }

void AnnotationStore::Exec(const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw std::runtime_error("sqlite: " + msg);
  }
}

std::string AnnotationStore::DayOf(std::chrono::system_clock::time_point t) const {
  using namespace std::chrono;
  auto local = t + minutes(options_.utc_offset_minutes);
  year_month_day ymd{floor<days>(local)};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

std::string AnnotationStore::Today() const { return DayOf(options_.clock()); }

std::string AnnotationStore::Timestamp(std::chrono::system_clock::time_point t) const {
  using namespace std::chrono;
  auto local = t + minutes(options_.utc_offset_minutes);
  auto day = floor<days>(local);
  hh_mm_ss<seconds> hms{floor<seconds>(local - day)};
  int off = options_.utc_offset_minutes;
  return fmt::format("{}T{:02d}:{:02d}:{:02d}{}{:02d}:{:02d}", DayOf(t), hms.hours().count(),
                     hms.minutes().count(), hms.seconds().count(), off < 0 ? '-' : '+',
                     std::abs(off) / 60, std::abs(off) % 60);
}

void AnnotationStore::AddAnnotator(const AnnotatorProfile& profile) {
  ValidateAnnotator(profile);
  std::lock_guard lock(mu_);
  Statement st(db_, "INSERT INTO annotators (id, handle, daily_cap, active) VALUES (?,?,?,?)");
  st.Bind(1, profile.id).Bind(2, profile.handle).Bind(3, int64_t{profile.daily_cap});
  st.Bind(4, int64_t{profile.active ? 1 : 0});
  try {
    st.Run();
  } catch (const ConflictError&) {
    throw ConflictError("annotator " + profile.id + " already exists");
  }
}

std::vector<AnnotatorProfile> AnnotationStore::Annotators() {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT id, handle, daily_cap, active FROM annotators ORDER BY id");
  std::vector<AnnotatorProfile> out;
  while (st.Step()) {
    out.push_back({st.Text(0), st.Text(1), static_cast<int>(st.Int(2)), st.Int(3) != 0});
  }
  return out;
}

void AnnotationStore::RequireAnnotator(const std::string& annotator_id, AnnotatorProfile* out) {
  Statement st(db_, "SELECT handle, daily_cap, active FROM annotators WHERE id = ?");
  st.Bind(1, annotator_id);
  if (!st.Step()) throw NotFoundError("unknown annotator " + annotator_id);
  AnnotatorProfile p{annotator_id, st.Text(0), static_cast<int>(st.Int(1)), st.Int(2) != 0};
  if (!p.active) throw ValidationError("annotator " + annotator_id + " is inactive");
  if (out) *out = p;
}

void AnnotationStore::ImportSamples(const corpus::Corpus& corpus) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  for (const auto& post : corpus.records) {
    Statement st(db_,
                 "INSERT INTO samples (id, image_path, title, ocr_text, tags) VALUES (?,?,?,?,?) "
                 "ON CONFLICT(id) DO UPDATE SET image_path = excluded.image_path, "
                 "title = excluded.title, ocr_text = excluded.ocr_text, tags = excluded.tags");
    st.Bind(1, post.id).Bind(2, corpus.ImagePath(post).string()).Bind(3, post.title);
    st.Bind(4, post.ocr_text).Bind(5, json(post.tags).dump());
    st.Run();
  }
  tx.Commit();
}

void AnnotationStore::SetSummary(const std::string& sample_id, const std::string& summary) {
  std::lock_guard lock(mu_);
  Statement st(db_, "UPDATE samples SET summary = ? WHERE id = ?");
  st.Bind(1, summary).Bind(2, sample_id);
  st.Run();
  if (sqlite3_changes(db_) == 0) throw NotFoundError("unknown sample " + sample_id);
}

std::optional<std::filesystem::path> AnnotationStore::MediaPath(const std::string& sample_id) {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT image_path FROM samples WHERE id = ?");
  st.Bind(1, sample_id);
  if (!st.Step()) return std::nullopt;
  return std::filesystem::path(st.Text(0));
}

BatchReport AnnotationStore::CreateBatch(Stage stage, const std::vector<Assignment>& assignments) {
  if (assignments.empty()) throw ValidationError("batch has no samples");
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  std::set<std::string> seen_samples;
  BatchReport report;
  report.stage = stage;
  for (const auto& a : assignments) {
    if (!seen_samples.insert(a.sample_id).second) {
      throw ValidationError("sample " + a.sample_id + " appears twice in the batch");
    }
    std::set<std::string> distinct(a.annotators.begin(), a.annotators.end());
    if (a.annotators.size() != 3 || distinct.size() != 3) {
      throw ValidationError("sample " + a.sample_id +
                            " needs exactly three distinct annotators");
    }
    Statement sample(db_, "SELECT stage1_final FROM samples WHERE id = ?");
    sample.Bind(1, a.sample_id);
    if (!sample.Step()) throw NotFoundError("unknown sample " + a.sample_id);
    if (stage == Stage::kII && sample.Text(0) != "toxic") {
      throw ValidationError("sample " + a.sample_id +
                            " is not finalized toxic at stage I; it cannot enter stage II");
    }
    Statement existing(db_, "SELECT COUNT(*) FROM tasks WHERE sample_id = ? AND stage = ?");
    existing.Bind(1, a.sample_id).Bind(2, StageName(stage));
    existing.Step();
    if (existing.Int(0) > 0) {
      throw ConflictError("sample " + a.sample_id + " is already assigned at stage " +
                          StageName(stage));
    }
    for (const auto& annotator : a.annotators) {
      RequireAnnotator(annotator, nullptr);
      ++report.per_annotator[annotator];
    }
  }

  {
    Statement st(db_, "INSERT INTO batches (stage, created_at) VALUES (?, ?)");
    st.Bind(1, StageName(stage)).Bind(2, Timestamp(options_.clock()));
    st.Run();
    report.batch_id = sqlite3_last_insert_rowid(db_);
  }
  for (const auto& a : assignments) {
    for (const auto& annotator : a.annotators) {
      Statement st(db_,
                   "INSERT INTO tasks (batch_id, sample_id, annotator_id, stage) VALUES (?,?,?,?)");
      st.Bind(1, report.batch_id).Bind(2, a.sample_id).Bind(3, annotator);
      st.Bind(4, StageName(stage));
      st.Run();
      ++report.n_tasks;
    }
  }
  tx.Commit();

  auto [lo, hi] = std::minmax_element(
      report.per_annotator.begin(), report.per_annotator.end(),
      [](const auto& x, const auto& y) { return x.second < y.second; });
  report.load_spread = hi->second - lo->second;
  return report;
}

int AnnotationStore::CountToday(const std::string& annotator_id, const std::string& day) {
  Statement st(db_, "SELECT COUNT(*) FROM annotations WHERE annotator_id = ? AND day = ?");
  st.Bind(1, annotator_id).Bind(2, day);
  st.Step();
  return static_cast<int>(st.Int(0));
}

NextTask AnnotationStore::GetNextTask(const std::string& annotator_id) {
  std::lock_guard lock(mu_);
  AnnotatorProfile profile;
  RequireAnnotator(annotator_id, &profile);
  if (CountToday(annotator_id, Today()) >= profile.daily_cap) return {std::nullopt, "cap reached"};
  Statement st(db_,
               "SELECT t.sample_id, t.stage, s.title, s.tags, s.ocr_text FROM tasks t "
               "JOIN samples s ON s.id = t.sample_id "
               "LEFT JOIN annotations a ON a.sample_id = t.sample_id "
               "AND a.annotator_id = t.annotator_id AND a.stage = t.stage "
               "WHERE t.annotator_id = ? AND a.sample_id IS NULL ORDER BY t.seq LIMIT 1");
  st.Bind(1, annotator_id);
  if (!st.Step()) return {std::nullopt, "no tasks"};
  TaskView view;
  view.sample_id = st.Text(0);
  view.stage = StageFrom(st.Text(1));
  view.title = st.Text(2);
  view.tags = json::parse(st.Text(3)).get<std::vector<std::string>>();
  view.ocr_text = st.Text(4);
  view.media_url = "/api/samples/" + view.sample_id + "/media";
  view.allowed_labels = AssignableLabels(view.stage);
  return {view, ""};
}

void AnnotationStore::SubmitAnnotation(const std::string& annotator_id,
                                       const std::string& sample_id, Stage stage,
                                       const std::string& label) {
  RequireAssignable(stage, label);
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  AnnotatorProfile profile;
  RequireAnnotator(annotator_id, &profile);
  {
    Statement st(
        db_, "SELECT COUNT(*) FROM tasks WHERE sample_id = ? AND annotator_id = ? AND stage = ?");
    st.Bind(1, sample_id).Bind(2, annotator_id).Bind(3, StageName(stage));
    st.Step();
    if (st.Int(0) == 0) {
      throw ValidationError(fmt::format("sample {} is not assigned to {} at stage {}", sample_id,
                                        annotator_id, StageName(stage)));
    }
  }
  {
    Statement st(db_,
                 "SELECT COUNT(*) FROM annotations WHERE sample_id = ? AND annotator_id = ? "
                 "AND stage = ?");
    st.Bind(1, sample_id).Bind(2, annotator_id).Bind(3, StageName(stage));
    st.Step();
    if (st.Int(0) > 0) {
      throw ConflictError(fmt::format("{} already annotated sample {} at stage {}", annotator_id,
                                      sample_id, StageName(stage)));
    }
  }
  auto now = options_.clock();
  std::string day = DayOf(now);
  if (CountToday(annotator_id, day) >= profile.daily_cap) {
    throw ConflictError(fmt::format("cap reached: {} has submitted {} samples today",
                                    annotator_id, profile.daily_cap));
  }
  Statement st(db_,
               "INSERT INTO annotations (sample_id, annotator_id, stage, label, submitted_at, day) "
               "VALUES (?,?,?,?,?,?)");
  st.Bind(1, sample_id).Bind(2, annotator_id).Bind(3, StageName(stage)).Bind(4, label);
  st.Bind(5, Timestamp(now)).Bind(6, day);
  st.Run();
  tx.Commit();
}

Progress AnnotationStore::GetProgress(const std::string& annotator_id) {
  std::lock_guard lock(mu_);
  AnnotatorProfile profile;
  RequireAnnotator(annotator_id, &profile);
  Progress p;
  p.cap = profile.daily_cap;
  p.submitted_today = CountToday(annotator_id, Today());
  Statement st(db_,
               "SELECT COUNT(*) FROM tasks t LEFT JOIN annotations a ON a.sample_id = t.sample_id "
               "AND a.annotator_id = t.annotator_id AND a.stage = t.stage "
               "WHERE t.annotator_id = ? AND a.sample_id IS NULL");
  st.Bind(1, annotator_id);
  st.Step();
  p.remaining_total = static_cast<int>(st.Int(0));
  return p;
}

std::vector<AnnotationRecord> AnnotationStore::Records(std::optional<Stage> stage) {
  std::lock_guard lock(mu_);
  Statement st(db_,
               "SELECT sample_id, annotator_id, stage, label, submitted_at FROM annotations "
               "WHERE ?1 IS NULL OR stage = ?1 ORDER BY sample_id, stage, annotator_id");
  if (stage) {
    st.Bind(1, StageName(*stage));
  } else {
    st.BindNull(1);
  }
  std::vector<AnnotationRecord> out;
  while (st.Step()) {
    out.push_back({st.Text(0), st.Text(1), StageFrom(st.Text(2)), st.Text(3), st.Text(4)});
  }
  return out;
}

FinalizeResult AnnotationStore::FinalizeLabels(Stage stage) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  FinalizeResult result;
  result.stage = stage;
  std::map<std::string, std::vector<std::string>> labels;
  {
    Statement st(db_,
                 "SELECT t.sample_id, a.label FROM tasks t LEFT JOIN annotations a "
                 "ON a.sample_id = t.sample_id AND a.annotator_id = t.annotator_id "
                 "AND a.stage = t.stage WHERE t.stage = ? ORDER BY t.sample_id, t.annotator_id");
    st.Bind(1, StageName(stage));
    while (st.Step()) {
      auto& v = labels[st.Text(0)];
      if (!st.IsNull(1)) v.push_back(st.Text(1));
    }
  }
  if (labels.empty()) throw ValidationError("no samples assigned at stage " + StageName(stage));
  for (const auto& [sample, v] : labels) {
    if (v.size() != 3) result.blocked.push_back(sample);
  }
  if (!result.blocked.empty()) return result;

  const char* sql = stage == Stage::kI ? "UPDATE samples SET stage1_final = ? WHERE id = ?"
                                       : "UPDATE samples SET stage2_final = ? WHERE id = ?";
  for (const auto& [sample, v] : labels) {
    std::string final_label = metrics::MajorityVote(stage, v);
    result.labels[sample] = final_label;
    if (final_label == kUndecided) result.undecided.push_back(sample);
    Statement st(db_, sql);
    st.Bind(1, final_label).Bind(2, sample);
    st.Run();
  }
  tx.Commit();
  return result;
}

std::map<std::string, std::string> AnnotationStore::FinalLabels(Stage stage) {
  std::lock_guard lock(mu_);
  Statement st(db_, stage == Stage::kI
                        ? "SELECT id, stage1_final FROM samples WHERE stage1_final IS NOT NULL"
                        : "SELECT id, stage2_final FROM samples WHERE stage2_final IS NOT NULL");
  std::map<std::string, std::string> out;
  while (st.Step()) out[st.Text(0)] = st.Text(1);
  return out;
}

corpus::Corpus AnnotationStore::ApplyFinalLabels(const corpus::Corpus& corpus) {
  auto s1 = FinalLabels(Stage::kI);
  auto s2 = FinalLabels(Stage::kII);
  corpus::Corpus out = corpus;
  for (auto& post : out.records) {
    if (auto it = s1.find(post.id); it != s1.end()) {
      post.stage1_label = ParseStage1Label(it->second);
      if (post.stage1_label != Stage1Label::kToxic) post.stage2_label.reset();
    }
    if (auto it = s2.find(post.id); it != s2.end() && post.stage1_label == Stage1Label::kToxic) {
      post.stage2_label = ParseStage2Label(it->second);
    }
  }
  return out;
}

metrics::AgreementReport AnnotationStore::ComputeAgreement(Stage stage) {
  return AgreementFromRecords(Records(stage), stage);
}

void AnnotationStore::RateSummary(const std::string& annotator_id, const std::string& sample_id,
                                  const Ratings& ratings) {
  for (auto [name, v] : {std::pair{"completeness", ratings.completeness},
                         std::pair{"fluency", ratings.fluency},
                         std::pair{"grammar", ratings.grammar}}) {
    if (v < 1 || v > 10) {
      throw ValidationError(fmt::format("{} score {} is outside 1..10", name, v));
    }
  }
  std::lock_guard lock(mu_);
  RequireAnnotator(annotator_id, nullptr);
  {
    Statement st(db_, "SELECT summary FROM samples WHERE id = ?");
    st.Bind(1, sample_id);
    if (!st.Step()) throw NotFoundError("unknown sample " + sample_id);
    if (st.IsNull(0)) throw ValidationError("sample " + sample_id + " has no summary to rate");
  }
  Statement st(db_,
               "INSERT INTO ratings (sample_id, annotator_id, completeness, fluency, grammar, "
               "submitted_at) VALUES (?,?,?,?,?,?)");
  st.Bind(1, sample_id).Bind(2, annotator_id).Bind(3, int64_t{ratings.completeness});
  st.Bind(4, int64_t{ratings.fluency}).Bind(5, int64_t{ratings.grammar});
  st.Bind(6, Timestamp(options_.clock()));
  try {
    st.Run();
  } catch (const ConflictError&) {
    throw ConflictError(annotator_id + " already rated sample " + sample_id);
  }
}

RatingReport AnnotationStore::SummaryRatingReport() {
  std::lock_guard lock(mu_);
  Statement st(db_,
               "SELECT COUNT(*), TOTAL(completeness), TOTAL(fluency), TOTAL(grammar) FROM ratings");
  st.Step();
  RatingReport r;
  r.n = static_cast<size_t>(st.Int(0));
  if (r.n == 0) return r;
  double n = static_cast<double>(r.n);
  r.completeness = st.Double(1) / n;
  r.fluency = st.Double(2) / n;
  r.grammar = st.Double(3) / n;
  return r;
}

std::map<std::string, PilotRow> AnnotationStore::CompareWithExperts(
    Stage stage, const std::map<std::string, std::string>& expert_labels) {
  std::map<std::string, PilotRow> out;
  for (const auto& r : Records(stage)) {
    auto it = expert_labels.find(r.sample_id);
    if (it == expert_labels.end()) continue;
    auto& row = out[r.annotator_id];
    ++row.compared;
    if (it->second == r.label) ++row.agreed;
  }
  return out;
}

}  // namespace memeguard::annotation
