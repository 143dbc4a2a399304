#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "fixtures.h"
#include "memeguard/cli/cli.h"
#include "memeguard/common/jsonl.h"

namespace memeguard::cli {
namespace {

using memeguard::testing::FakeModelService;
using memeguard::testing::TempDir;
using nlohmann::json;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  CliTest() {
    corpus_ = memeguard::testing::MakeFixtureCorpus(dir_ / "data", {.n = 30, .n_test = 10});
    memeguard::testing::WriteText(dir_ / "gateway.conf",
                                  "chat_url = http://stub/chat\n"
                                  "embeddings_url = http://stub/embeddings\n"
                                  "search_url = http://stub/search\n"
                                  "conceptnet_url = http://stub/conceptnet\n"
                                  "max_attempts = 1\n"
                                  "backoff_ms = 0\n");
    svc_.set_oracle(corpus_);
  }

  Outcome Cli(std::vector<std::string> args, bool with_config = true) {
    if (with_config) {
      args.insert(args.begin(), {"--config", (dir_ / "gateway.conf").string(), "--cache-dir",
                                 (dir_ / "cache").string()});
    }
    std::ostringstream out;
    std::ostringstream err;
    Environment env;
    auto transport = svc_.transport();
    env.transport = [transport] { return transport; };
    env.out = &out;
    env.err = &err;
    Outcome o;
    o.code = cli::Run(args, env);
    o.out = out.str();
    o.err = err.str();
    return o;
  }

  std::string Manifest() const { return (dir_ / "data" / "manifest.jsonl").string(); }

  TempDir dir_;
  FakeModelService svc_;
  corpus::Corpus corpus_;
};

TEST_F(CliTest, HelpAndUsageErrors) {
  Outcome help = Cli({"--help"}, false);
  EXPECT_EQ(help.code, kExitOk);
  EXPECT_NE(help.out.find("annotate"), std::string::npos);
  Outcome sub = Cli({"detect", "run", "--help"}, false);
  EXPECT_EQ(sub.code, kExitOk);
  EXPECT_NE(sub.out.find("--strategy"), std::string::npos);
  EXPECT_EQ(Cli({}, false).code, kExitValidation);
  EXPECT_EQ(Cli({"frobnicate"}, false).code, kExitValidation);
  Outcome missing = Cli({"corpus", "split", "--out", "x"}, false);
  EXPECT_EQ(missing.code, kExitValidation);
  EXPECT_NE(missing.err.find("--manifest"), std::string::npos);
  EXPECT_EQ(Cli({"detect", "run", "--manifest", Manifest(), "--out", (dir_ / "o").string(),
                 "--k", "0"}).code,
            kExitValidation);
}

TEST_F(CliTest, MissingManifestIsAValidationError) {
  Outcome o = Cli({"corpus", "stats", "--manifest", (dir_ / "nope.jsonl").string()});
  EXPECT_EQ(o.code, kExitValidation);
  EXPECT_NE(o.err.find("error:"), std::string::npos);
}

TEST_F(CliTest, BadConfigIsAValidationError) {
  memeguard::testing::WriteText(dir_ / "bad.conf", "openai_api_key = sk-123\n");
  Outcome o = Cli({"--config", (dir_ / "bad.conf").string(), "tags", "expand", "--manifest",
                   Manifest(), "--out", (dir_ / "exp").string()},
                  false);
  EXPECT_EQ(o.code, kExitValidation);
  EXPECT_NE(o.err.find("api_key"), std::string::npos);
  o = Cli({"--set", "max_attempts", "tags", "expand", "--manifest", Manifest(), "--out",
           (dir_ / "exp").string()});
  EXPECT_EQ(o.code, kExitValidation);
}

TEST_F(CliTest, IngestSplitStatsWithRunManifest) {
  auto ingested = dir_ / "ingested";
  Outcome o = Cli({"corpus", "ingest", "--manifest", Manifest(), "--out", ingested.string(),
                   "--min-comments", "5"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  json rm = json::parse(Slurp(ingested / "run_manifest.json"));
  EXPECT_EQ(rm["command"], "corpus ingest");
  EXPECT_EQ(rm["outputs"], json({"manifest.jsonl", "ingest_report.json"}));
  EXPECT_TRUE(rm.contains("config_digest"));

  auto split = dir_ / "split";
  o = Cli({"corpus", "split", "--manifest", Manifest(), "--out", split.string(), "--test-size",
           "8", "--coverage", "0", "--seed", "3"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_EQ(json::parse(Slurp(split / "run_manifest.json"))["seeds"]["split"], 3);

  o = Cli({"--format", "records", "corpus", "stats", "--manifest",
           (split / "manifest.jsonl").string()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  std::istringstream lines(o.out);
  std::string line;
  json total;
  while (std::getline(lines, line)) {
    json j = json::parse(line);
    if (j["label"] == "total") total = j;
  }
  EXPECT_EQ(total["test"], 8);
  EXPECT_EQ(total["train"], 22);
}

// Synthetic manifest with the published label table; exercises the path the
// conditional dataset check takes on the real data.
TEST_F(CliTest, StatsReproduceALabelTable) {
  struct Row {
    const char* stage1;
    const char* stage2;
    int train;
    int test;
  };
  const std::vector<Row> rows = {{"normal", nullptr, 1243, 149},
                                 {"toxic", "hateful", 1475, 343},
                                 {"toxic", "dangerous", 1788, 375},
                                 {"toxic", "offensive", 653, 122},
                                 {"toxic", "undecided", 141, 11}};
  std::vector<json> lines;
  for (const auto& r : rows) {
    for (int i = 0; i < r.train + r.test; ++i) {
      json j = {{"id", fmt::format("{}-{}-{}", r.stage1, r.stage2 ? r.stage2 : "", i)},
                {"image_path", "img.png"},
                {"title", "t"},
                {"tags", {"x"}},
                {"comment_count", 3},
                {"stage1_label", r.stage1},
                {"split", i < r.train ? "train" : "test"}};
      if (r.stage2) j["stage2_label"] = r.stage2;
      lines.push_back(j);
    }
  }
  jsonl::WriteFile(dir_ / "table.jsonl", lines);
  Outcome o = Cli({"--format", "records", "corpus", "stats", "--manifest",
                   (dir_ / "table.jsonl").string()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  std::map<std::string, json> got;
  std::istringstream in(o.out);
  std::string line;
  while (std::getline(in, line)) {
    json j = json::parse(line);
    got[j["label"]] = j;
  }
  EXPECT_EQ(got["normal"]["total"], 1392);
  EXPECT_EQ(got["toxic"]["total"], 4908);
  EXPECT_EQ(got["hateful"]["total"], 1818);
  EXPECT_EQ(got["dangerous"]["total"], 2163);
  EXPECT_EQ(got["offensive"]["total"], 775);
  EXPECT_EQ(got["undecided"]["total"], 152);
  EXPECT_EQ(got["total"]["train"], 5300);
  EXPECT_EQ(got["total"]["test"], 1000);
}

TEST_F(CliTest, PredictThenDetectAndRescore) {
  auto tags = dir_ / "tags";
  Outcome o = Cli({"--workers", "4", "tags", "predict", "--manifest", Manifest(), "--out",
                   tags.string()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  size_t predicted = 0;
  auto errors = jsonl::ForEachRecord(tags / "predicted_tags.jsonl",
                                     [&](size_t, const json&) { ++predicted; });
  EXPECT_TRUE(errors.empty());
  EXPECT_EQ(predicted, 30u);

  auto run = dir_ / "run";
  o = Cli({"--workers", "4", "--format", "records", "detect", "run", "--manifest", Manifest(),
           "--strategy", "image_pred_combined", "--alpha", "0.5", "--k", "3", "--predicted",
           (tags / "predicted_tags.jsonl").string(), "--out", run.string()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  json report = json::parse(Slurp(run / "report.json"));
  EXPECT_EQ(report["macro_f1"], 100.0);
  EXPECT_TRUE(report["valid"].get<bool>());
  json rm = json::parse(Slurp(run / "run_manifest.json"));
  EXPECT_FALSE(rm["template_checksums"].empty());
  EXPECT_GT(rm["gateway"]["network_calls"].get<int>(), 0);

  o = Cli({"--format", "records", "eval", "predictions", "--predictions",
           (run / "predictions.jsonl").string()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_NE(o.out.find("100"), std::string::npos);

  o = Cli({"detect", "run", "--manifest", Manifest(), "--strategy", "image_pred_combined",
           "--alpha", "0.5", "--out", (dir_ / "run2").string()});
  EXPECT_EQ(o.code, kExitValidation);
  EXPECT_NE(o.err.find("--predicted"), std::string::npos);
}

TEST_F(CliTest, OfflineMissAndServiceFailureExitTwo) {
  Outcome o = Cli({"--offline", "detect", "run", "--manifest", Manifest(), "--out",
                   (dir_ / "off").string()});
  EXPECT_EQ(o.code, kExitExternal) << o.err;
  svc_.set_failure_status(503);
  o = Cli({"detect", "run", "--manifest", Manifest(), "--out", (dir_ / "fail").string()});
  EXPECT_EQ(o.code, kExitExternal) << o.err;
}

TEST_F(CliTest, EvalCorpusAnalyses) {
  Outcome o = Cli({"--format", "records", "eval", "top-tags", "--manifest", Manifest(),
                   "--label", "toxic", "--n", "3"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_FALSE(o.out.empty());
  o = Cli({"eval", "cooccur", "--manifest", Manifest(), "--top", "5"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  o = Cli({"eval", "top-tags", "--manifest", Manifest(), "--label", "silly"});
  EXPECT_EQ(o.code, kExitValidation);
}

TEST_F(CliTest, AnnotationAdministration) {
  std::string db = (dir_ / "ann.db").string();
  Outcome o = Cli({"annotate", "import", "--db", db, "--manifest", Manifest()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  for (const char* id : {"r1", "r2", "r3", "r4"}) {
    o = Cli({"annotate", "add-annotator", "--db", db, "--id", id, "--handle", id});
    ASSERT_EQ(o.code, kExitOk) << o.err;
  }
  o = Cli({"annotate", "add-annotator", "--db", db, "--id", "r5", "--handle", "u/someone"});
  EXPECT_EQ(o.code, kExitValidation);
  o = Cli({"--format", "records", "annotate", "batch", "--db", db, "--stage", "I",
           "--manifest", Manifest(), "--annotators", "r1", "r2", "r3", "r4"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  json report = json::parse(o.out);
  EXPECT_EQ(report["n_tasks"], 90);
  EXPECT_LE(report["load_spread"].get<int>(), 1);
  o = Cli({"annotate", "finalize", "--db", db, "--stage", "I"});
  EXPECT_EQ(o.code, kExitValidation);
  EXPECT_NE(o.err.find("blocked"), std::string::npos);
  o = Cli({"annotate", "export", "--db", db, "--out", (dir_ / "exp").string()});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  EXPECT_TRUE(std::filesystem::exists(dir_ / "exp" / "records.jsonl"));
}

}  // namespace
}  // namespace memeguard::cli
