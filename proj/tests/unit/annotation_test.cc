#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <gtest/gtest.h>
#include <sqlite3.h>

#include <atomic>
#include <thread>

#include "fixtures.h"
#include "memeguard/annotation/server.h"
#include "memeguard/annotation/store.h"
#include "memeguard/common/errors.h"
#include "memeguard/metrics/classification.h"

namespace memeguard::annotation {
namespace {

using memeguard::testing::TempDir;
using nlohmann::json;
using std::chrono::system_clock;

// 2024-01-01T00:00:00Z
constexpr int64_t kEpoch = 1704067200;

class FakeClock {
 public:
  Clock clock() {
    return [this] { return system_clock::from_time_t(static_cast<time_t>(seconds_.load())); };
  }
  void Set(int64_t s) { seconds_ = s; }
  void Advance(int64_t s) { seconds_ += s; }

 private:
  std::atomic<int64_t> seconds_{kEpoch + 3600};
};

class StoreTest : public ::testing::Test {
 protected:
  StoreTest() {
    corpus_ = memeguard::testing::MakeFixtureCorpus(dir_.path(), {.n = 9, .n_test = 0});
    store_ = std::make_unique<AnnotationStore>(dir_ / "ann.db", StoreOptions{clock_.clock(), 0});
    store_->ImportSamples(corpus_);
    for (const char* id : {"a1", "a2", "a3", "a4"}) store_->AddAnnotator({id, id, 50, true});
  }

  std::vector<Assignment> AllToFirstThree() {
    std::vector<Assignment> out;
    for (const auto& p : corpus_.records) out.push_back({p.id, {"a1", "a2", "a3"}});
    return out;
  }

  void SubmitAll(Stage stage, const std::map<std::string, std::vector<std::string>>& labels) {
    for (const auto& [sample, v] : labels) {
      const char* who[] = {"a1", "a2", "a3"};
      for (size_t i = 0; i < 3; ++i) store_->SubmitAnnotation(who[i], sample, stage, v[i]);
    }
  }

  TempDir dir_;
  FakeClock clock_;
  corpus::Corpus corpus_;
  std::unique_ptr<AnnotationStore> store_;
};

TEST(ValidateAnnotatorTest, RejectsPlatformHandles) {
  EXPECT_NO_THROW(ValidateAnnotator({"x", "Rater One", 50, true}));
  EXPECT_THROW(ValidateAnnotator({"x", "u/someone", 50, true}), ValidationError);
  EXPECT_THROW(ValidateAnnotator({"x", "/u/someone", 50, true}), ValidationError);
  EXPECT_THROW(ValidateAnnotator({"x", "@someone", 50, true}), ValidationError);
  EXPECT_THROW(ValidateAnnotator({"", "ok", 50, true}), ValidationError);
  EXPECT_THROW(ValidateAnnotator({"x", "ok", 0, true}), ValidationError);
}

TEST_F(StoreTest, DuplicateAnnotatorConflicts) {
  EXPECT_THROW(store_->AddAnnotator({"a1", "again", 50, true}), ConflictError);
  EXPECT_EQ(store_->Annotators().size(), 4u);
}

TEST_F(StoreTest, BatchRules) {
  EXPECT_THROW(store_->CreateBatch(Stage::kI, {}), ValidationError);
  EXPECT_THROW(store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a2"}}}), ValidationError);
  EXPECT_THROW(store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a1", "a2"}}}), ValidationError);
  EXPECT_THROW(store_->CreateBatch(Stage::kI, {{"nope", {"a1", "a2", "a3"}}}), NotFoundError);
  EXPECT_THROW(store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a2", "zz"}}}), NotFoundError);
  EXPECT_THROW(store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a2", "a3"}},
                                               {"p000", {"a1", "a2", "a4"}}}),
               ValidationError);
  EXPECT_THROW(store_->CreateBatch(Stage::kII, {{"p000", {"a1", "a2", "a3"}}}), ValidationError);

  BatchReport r = store_->CreateBatch(
      Stage::kI, {{"p000", {"a1", "a2", "a3"}}, {"p001", {"a2", "a3", "a4"}}});
  EXPECT_EQ(r.n_tasks, 6u);
  EXPECT_EQ(r.per_annotator.at("a2"), 2u);
  EXPECT_EQ(r.load_spread, 1u);
  EXPECT_THROW(store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a2", "a4"}}}), ConflictError);
}

TEST_F(StoreTest, FailedBatchWritesNothing) {
  EXPECT_THROW(store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a2", "a3"}},
                                               {"p001", {"a1", "a2", "zz"}}}),
               NotFoundError);
  EXPECT_EQ(store_->GetProgress("a1").remaining_total, 0);
}

TEST_F(StoreTest, TasksComeInAssignmentOrderWithoutLeakingIdentity) {
  store_->CreateBatch(Stage::kI, AllToFirstThree());
  NextTask next = store_->GetNextTask("a1");
  ASSERT_TRUE(next.task);
  EXPECT_EQ(next.task->sample_id, "p000");
  EXPECT_EQ(next.task->title, corpus_.records[0].title);
  EXPECT_EQ(next.task->allowed_labels, (std::vector<std::string>{"toxic", "normal"}));
  std::string dumped = next.task->ToJson().dump();
  EXPECT_EQ(dumped.find("http"), std::string::npos);
  store_->SubmitAnnotation("a1", "p000", Stage::kI, "toxic");
  EXPECT_EQ(store_->GetNextTask("a1").task->sample_id, "p001");
  EXPECT_EQ(store_->GetNextTask("a2").task->sample_id, "p000");
  NextTask none = store_->GetNextTask("a4");
  EXPECT_FALSE(none.task);
  EXPECT_EQ(none.reason, "no tasks");
  EXPECT_THROW(store_->GetNextTask("ghost"), NotFoundError);
}

TEST_F(StoreTest, SubmissionRules) {
  store_->CreateBatch(Stage::kI, AllToFirstThree());
  EXPECT_THROW(store_->SubmitAnnotation("a4", "p000", Stage::kI, "toxic"), ValidationError);
  EXPECT_THROW(store_->SubmitAnnotation("a1", "p000", Stage::kI, "hateful"), ValidationError);
  EXPECT_THROW(store_->SubmitAnnotation("a1", "p000", Stage::kI, "undecided"), ValidationError);
  EXPECT_THROW(store_->SubmitAnnotation("ghost", "p000", Stage::kI, "toxic"), NotFoundError);
  store_->SubmitAnnotation("a1", "p000", Stage::kI, "toxic");
  EXPECT_THROW(store_->SubmitAnnotation("a1", "p000", Stage::kI, "normal"), ConflictError);
  auto records = store_->Records(Stage::kI);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].label, "toxic");
  EXPECT_EQ(records[0].submitted_at.substr(0, 10), "2024-01-01");
}

TEST_F(StoreTest, DailyCapIsEnforcedAndResetsNextDay) {
  store_->AddAnnotator({"c1", "c1", 2, true});
  store_->AddAnnotator({"c2", "c2", 2, true});
  std::vector<Assignment> a;
  for (const auto& p : corpus_.records) a.push_back({p.id, {"c1", "c2", "a1"}});
  store_->CreateBatch(Stage::kI, a);
  store_->SubmitAnnotation("c1", "p000", Stage::kI, "toxic");
  store_->SubmitAnnotation("c1", "p001", Stage::kI, "toxic");
  EXPECT_THROW(store_->SubmitAnnotation("c1", "p002", Stage::kI, "toxic"), ConflictError);
  EXPECT_EQ(store_->GetNextTask("c1").reason, "cap reached");
  Progress p = store_->GetProgress("c1");
  EXPECT_EQ(p.submitted_today, 2);
  EXPECT_EQ(p.cap, 2);
  EXPECT_EQ(p.remaining_total, 7);
  clock_.Advance(24 * 3600);
  EXPECT_NO_THROW(store_->SubmitAnnotation("c1", "p002", Stage::kI, "toxic"));
  EXPECT_EQ(store_->GetProgress("c1").submitted_today, 1);
}

TEST_F(StoreTest, DayBoundaryUsesTheServiceOffset) {
  AnnotationStore plus_one(dir_ / "tz.db", StoreOptions{clock_.clock(), 60});
  auto late = system_clock::from_time_t(kEpoch - 30 * 60);  // 2023-12-31T23:30Z
  EXPECT_EQ(store_->DayOf(late), "2023-12-31");
  EXPECT_EQ(plus_one.DayOf(late), "2024-01-01");
}

TEST_F(StoreTest, ConcurrentSubmissionsNeverExceedTheCap) {
  store_->AddAnnotator({"c1", "c1", 3, true});
  std::vector<Assignment> a;
  for (const auto& p : corpus_.records) a.push_back({p.id, {"c1", "a2", "a3"}});
  store_->CreateBatch(Stage::kI, a);
  std::atomic<int> ok{0};
  std::atomic<int> conflict{0};
  std::vector<std::thread> threads;
  for (const auto& p : corpus_.records) {
    threads.emplace_back([&, id = p.id] {
      try {
        store_->SubmitAnnotation("c1", id, Stage::kI, "normal");
        ++ok;
      } catch (const ConflictError&) {
        ++conflict;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 3);
  EXPECT_EQ(conflict.load(), 6);
}

TEST_F(StoreTest, FinalizeIsBlockedUntilEverySampleHasThreeLabels) {
  store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a2", "a3"}}, {"p001", {"a1", "a2", "a3"}}});
  SubmitAll(Stage::kI, {{"p000", {"toxic", "toxic", "normal"}}});
  store_->SubmitAnnotation("a1", "p001", Stage::kI, "normal");
  FinalizeResult blocked = store_->FinalizeLabels(Stage::kI);
  EXPECT_EQ(blocked.blocked, (std::vector<std::string>{"p001"}));
  EXPECT_TRUE(blocked.labels.empty());
  EXPECT_TRUE(store_->FinalLabels(Stage::kI).empty());

  store_->SubmitAnnotation("a2", "p001", Stage::kI, "normal");
  store_->SubmitAnnotation("a3", "p001", Stage::kI, "toxic");
  FinalizeResult done = store_->FinalizeLabels(Stage::kI);
  EXPECT_TRUE(done.blocked.empty());
  EXPECT_EQ(done.labels.at("p000"), "toxic");
  EXPECT_EQ(done.labels.at("p001"), "normal");
  FinalizeResult again = store_->FinalizeLabels(Stage::kI);
  EXPECT_EQ(again.labels, done.labels);
  EXPECT_THROW(store_->FinalizeLabels(Stage::kII), ValidationError);
}

TEST_F(StoreTest, StageTwoFollowsStageOneAndCanBeUndecided) {
  store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a2", "a3"}}, {"p001", {"a1", "a2", "a3"}}});
  SubmitAll(Stage::kI, {{"p000", {"toxic", "toxic", "toxic"}},
                        {"p001", {"normal", "normal", "toxic"}}});
  store_->FinalizeLabels(Stage::kI);
  EXPECT_THROW(store_->CreateBatch(Stage::kII, {{"p001", {"a1", "a2", "a3"}}}), ValidationError);
  store_->CreateBatch(Stage::kII, {{"p000", {"a1", "a2", "a4"}}});
  store_->SubmitAnnotation("a1", "p000", Stage::kII, "hateful");
  store_->SubmitAnnotation("a2", "p000", Stage::kII, "dangerous");
  store_->SubmitAnnotation("a4", "p000", Stage::kII, "offensive");
  FinalizeResult r = store_->FinalizeLabels(Stage::kII);
  EXPECT_EQ(r.labels.at("p000"), "undecided");
  EXPECT_EQ(r.undecided, (std::vector<std::string>{"p000"}));

  corpus::Corpus applied = store_->ApplyFinalLabels(corpus_);
  EXPECT_EQ(applied.records[0].stage1_label, Stage1Label::kToxic);
  EXPECT_EQ(applied.records[0].stage2_label, Stage2Label::kUndecided);
  EXPECT_EQ(applied.records[1].stage1_label, Stage1Label::kNormal);
  EXPECT_FALSE(applied.records[1].stage2_label.has_value());
}

TEST_F(StoreTest, AnnotationsAreAppendOnly) {
  store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a2", "a3"}}});
  store_->SubmitAnnotation("a1", "p000", Stage::kI, "toxic");
  sqlite3* db = nullptr;
  ASSERT_EQ(sqlite3_open((dir_ / "ann.db").c_str(), &db), SQLITE_OK);
  sqlite3_busy_timeout(db, 2000);
  char* err = nullptr;
  EXPECT_NE(sqlite3_exec(db, "UPDATE annotations SET label = 'normal'", nullptr, nullptr, &err),
            SQLITE_OK);
  sqlite3_free(err);
  err = nullptr;
  EXPECT_NE(sqlite3_exec(db, "DELETE FROM annotations", nullptr, nullptr, &err), SQLITE_OK);
  sqlite3_free(err);
  sqlite3_close(db);
  EXPECT_EQ(store_->Records()[0].label, "toxic");
}

TEST_F(StoreTest, RatingsNeedASummaryAndAreUniquePerAnnotator) {
  Ratings good{8, 9, 10};
  EXPECT_THROW(store_->RateSummary("a1", "p000", good), ValidationError);
  store_->SetSummary("p000", "A meme about the weather.");
  EXPECT_THROW(store_->SetSummary("nope", "x"), NotFoundError);
  EXPECT_THROW(store_->RateSummary("a1", "p000", {0, 5, 5}), ValidationError);
  EXPECT_THROW(store_->RateSummary("a1", "p000", {5, 11, 5}), ValidationError);
  store_->RateSummary("a1", "p000", good);
  store_->RateSummary("a2", "p000", {6, 7, 8});
  EXPECT_THROW(store_->RateSummary("a1", "p000", good), ConflictError);
  RatingReport r = store_->SummaryRatingReport();
  EXPECT_EQ(r.n, 2u);
  EXPECT_DOUBLE_EQ(r.completeness, 7.0);
  EXPECT_DOUBLE_EQ(r.fluency, 8.0);
  EXPECT_DOUBLE_EQ(r.grammar, 9.0);
}

TEST_F(StoreTest, AgreementMatchesFleissOnTheCountMatrix) {
  store_->CreateBatch(Stage::kI, AllToFirstThree());
  DeterministicRng rng(4);
  std::map<std::string, std::vector<std::string>> labels;
  for (const auto& p : corpus_.records) {
    for (int i = 0; i < 3; ++i) labels[p.id].push_back(rng.Below(3) == 0 ? "normal" : "toxic");
  }
  SubmitAll(Stage::kI, labels);
  auto records = store_->Records(Stage::kI);
  auto counts = CountMatrix(records, Stage::kI);
  ASSERT_EQ(counts.size(), 9u);
  for (const auto& row : counts) EXPECT_EQ(row[0] + row[1], 3);
  EXPECT_DOUBLE_EQ(store_->ComputeAgreement(Stage::kI).kappa, metrics::FleissKappa(counts).kappa);
  records.pop_back();
  EXPECT_THROW(CountMatrix(records, Stage::kI), ValidationError);
}

TEST_F(StoreTest, PilotComparisonCountsAgreement) {
  store_->CreateBatch(Stage::kI, {{"p000", {"a1", "a2", "a3"}}, {"p001", {"a1", "a2", "a3"}}});
  SubmitAll(Stage::kI, {{"p000", {"toxic", "normal", "toxic"}},
                        {"p001", {"normal", "normal", "toxic"}}});
  auto rows = store_->CompareWithExperts(Stage::kI, {{"p000", "toxic"}, {"p001", "normal"}});
  EXPECT_EQ(rows.at("a1").compared, 2u);
  EXPECT_EQ(rows.at("a1").agreed, 2u);
  EXPECT_EQ(rows.at("a2").agreed, 1u);
  EXPECT_EQ(rows.at("a3").agreed, 1u);
}

TEST(AnnotationRecordTest, JsonRoundTripAndLoader) {
  AnnotationRecord r{"s1", "a1", Stage::kII, "offensive", "2024-01-01T10:00:00+00:00"};
  AnnotationRecord back = AnnotationRecord::FromJson(r.ToJson());
  EXPECT_EQ(back.sample_id, "s1");
  EXPECT_EQ(back.stage, Stage::kII);
  EXPECT_EQ(back.label, "offensive");
  TempDir dir;
  memeguard::testing::WriteText(dir / "r.jsonl", r.ToJson().dump() + "\n{broken\n");
  EXPECT_THROW(LoadAnnotationRecords(dir / "r.jsonl"), ValidationError);
  memeguard::testing::WriteText(dir / "ok.jsonl", r.ToJson().dump() + "\n");
  EXPECT_EQ(LoadAnnotationRecords(dir / "ok.jsonl").size(), 1u);
}

class ServerTest : public StoreTest {
 protected:
  void SetUp() override {
    server_ = std::make_unique<AnnotationServer>(*store_, ServerOptions{"secret", 4});
    port_ = server_->Bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->Listen(); });
    while (!server_->running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    admin_ = {{"Authorization", "Bearer secret"}};
  }

  void TearDown() override {
    server_->Stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Result Post(const std::string& path, const json& body, bool admin = false) {
    return client_->Post(path, admin ? admin_ : httplib::Headers{}, body.dump(),
                         "application/json");
  }

  std::unique_ptr<AnnotationServer> server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
  httplib::Headers admin_;
};

TEST_F(ServerTest, AdminEndpointsNeedTheToken) {
  json profile = {{"id", "n1"}, {"handle", "New"}, {"daily_cap", 10}, {"active", true}};
  auto res = Post("/api/admin/annotators", profile);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);
  res = client_->Post("/api/admin/annotators", {{"Authorization", "Bearer wrong!"}},
                      profile.dump(), "application/json");
  EXPECT_EQ(res->status, 401);
  res = Post("/api/admin/annotators", profile, true);
  EXPECT_EQ(res->status, 201);
  res = Post("/api/admin/annotators", profile, true);
  EXPECT_EQ(res->status, 409);
  json bad = {{"id", "n2"}, {"handle", "u/real"}, {"daily_cap", 10}, {"active", true}};
  EXPECT_EQ(Post("/api/admin/annotators", bad, true)->status, 400);
}

TEST_F(ServerTest, AnnotatorFlowAndErrorMapping) {
  json batch = {{"stage", "I"},
                {"assignments", {{{"sample", "p000"}, {"annotators", {"a1", "a2", "a3"}}}}}};
  auto res = Post("/api/admin/batches", batch, true);
  ASSERT_EQ(res->status, 201) << res->body;
  EXPECT_EQ(json::parse(res->body)["n_tasks"], 3);

  res = client_->Get("/api/tasks/next?annotator=a1");
  ASSERT_EQ(res->status, 200);
  json task = json::parse(res->body)["task"];
  EXPECT_EQ(task["sample"], "p000");

  auto media = client_->Get(task["media_url"].get<std::string>());
  ASSERT_EQ(media->status, 200);
  EXPECT_EQ(media->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(media->body.substr(1, 3), "PNG");
  EXPECT_EQ(client_->Get("/api/samples/nope/media")->status, 404);

  json a = {{"annotator", "a1"}, {"sample", "p000"}, {"stage", "I"}, {"label", "toxic"}};
  EXPECT_EQ(Post("/api/annotations", a)->status, 201);
  EXPECT_EQ(Post("/api/annotations", a)->status, 409);
  a["annotator"] = "ghost";
  EXPECT_EQ(Post("/api/annotations", a)->status, 404);
  a["annotator"] = "a2";
  a["label"] = "sarcastic";
  EXPECT_EQ(Post("/api/annotations", a)->status, 400);
  a.erase("label");
  EXPECT_EQ(Post("/api/annotations", a)->status, 400);
  EXPECT_EQ(client_->Post("/api/annotations", "not json", "application/json")->status, 400);
  EXPECT_EQ(client_->Get("/api/tasks/next")->status, 400);

  res = client_->Get("/api/progress?annotator=a1");
  json progress = json::parse(res->body);
  EXPECT_EQ(progress["submitted_today"], 1);
  EXPECT_EQ(progress["remaining_total"], 0);
  res = client_->Get("/api/tasks/next?annotator=a1");
  EXPECT_TRUE(json::parse(res->body)["task"].is_null());
  EXPECT_EQ(json::parse(res->body)["reason"], "no tasks");

  res = client_->Post("/api/admin/finalize?stage=I", admin_, "", "application/json");
  EXPECT_EQ(res->status, 409);
  EXPECT_EQ(json::parse(res->body)["blocked"], json({"p000"}));
  for (const char* who : {"a2", "a3"}) {
    json b = {{"annotator", who}, {"sample", "p000"}, {"stage", "I"}, {"label", "normal"}};
    ASSERT_EQ(Post("/api/annotations", b)->status, 201);
  }
  res = client_->Post("/api/admin/finalize?stage=I", admin_, "", "application/json");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["labels"]["p000"], "normal");
  res = client_->Get("/api/admin/records?stage=I", admin_);
  EXPECT_EQ(json::parse(res->body)["records"].size(), 3u);
  EXPECT_EQ(client_->Get("/api/admin/records?stage=III", admin_)->status, 400);
  EXPECT_EQ(client_->Get("/api/admin/agreement?stage=I", admin_)->status, 200);
}

TEST_F(ServerTest, RatingsEndpoint) {
  store_->SetSummary("p003", "summary");
  json r = {{"annotator", "a1"}, {"sample", "p003"}, {"completeness", 7}, {"fluency", 8},
            {"grammar", 9}};
  EXPECT_EQ(Post("/api/ratings", r)->status, 201);
  EXPECT_EQ(Post("/api/ratings", r)->status, 409);
  r["grammar"] = "nine";
  EXPECT_EQ(Post("/api/ratings", r)->status, 400);
  auto res = client_->Get("/api/admin/ratings", admin_);
  EXPECT_EQ(json::parse(res->body)["n"], 1);
}

TEST(ServerDisabledAdminTest, EmptyTokenDisablesAdmin) {
  TempDir dir;
  AnnotationStore store(dir / "a.db");
  AnnotationServer server(store, ServerOptions{"", 2});
  int port = server.Bind("127.0.0.1", 0);
  std::thread t([&] { server.Listen(); });
  while (!server.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/api/admin/ratings", {{"Authorization", "Bearer "}});
  EXPECT_EQ(res->status, 401);
  server.Stop();
  t.join();
}

}  // namespace
}  // namespace memeguard::annotation
