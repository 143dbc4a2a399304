#include <gtest/gtest.h>

#include "fixtures.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/random.h"
#include "memeguard/common/text.h"
#include "memeguard/tagging/lens.h"
#include "memeguard/tagging/pipeline.h"
#include "memeguard/tagging/templates.h"

namespace memeguard::tagging {
namespace {

using memeguard::testing::FakeModelService;
using memeguard::testing::StubGatewayConfig;
using memeguard::testing::TempDir;
using nlohmann::json;

TEST(LensTest, StripsPlatformNoise) {
  EXPECT_EQ(CleanLensContext("Funny cat -- check out https://x.com/a?b=1 now"),
            "Funny cat -- now");
  EXPECT_EQ(CleanLensContext("Posted in r/memes by u/someone"), "Posted in memes by someone");
  EXPECT_EQ(CleanLensContext("Great meme 😂🔥 2.5K likes 3M views"), "Great meme");
  EXPECT_EQ(CleanLensContext("thanks @bob for this"), "thanks for this");
  EXPECT_EQ(CleanLensContext("Café — naïve 日本語 text"), "Café — naïve text");
  EXPECT_EQ(CleanLensContext("   "), "");
}

// Property: cleaning is idempotent on arbitrary mixes of noisy fragments.
TEST(LensTest, IdempotentOnRandomInputs) {
  const std::vector<std::string> pieces = {
      "Title",  " -- ",      "visit",    "www.site.org/x", "https://a.b/c", "r/",
      "u/",     "memes",     "😂",       "🇺🇸",             "12 likes",      "1.2k views",
      "@user",  "@",         "日本",     "é",              "  ",            "\t",
      "source:", "link:",    "check out", "100",           "K",             "—",
      "£5",     "(r/pics)",  "a@b",      "‍",         "️",             "."};
  DeterministicRng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    size_t n = 1 + rng.Below(10);
    for (size_t i = 0; i < n; ++i) {
      s += pieces[rng.Below(pieces.size())];
      if (rng.Below(2)) s += " ";
    }
    std::string once = CleanLensContext(s);
    ASSERT_EQ(CleanLensContext(once), once) << "input: " << s;
  }
}

TEST(TemplateTest, RenderChecksPlaceholdersBothWays) {
  TemplateSet t;
  t.Set("x", "Hello {name}, {{literal}}");
  EXPECT_EQ(t.Render("x", {{"name", "Ann"}}), "Hello Ann, {literal}");
  EXPECT_THROW(t.Render("x", {}), ConfigError);
  EXPECT_THROW(t.Render("x", {{"name", "a"}, {"extra", "b"}}), ConfigError);
  EXPECT_THROW(t.Text("missing"), ConfigError);
  // Values are not re-expanded.
  EXPECT_EQ(t.Render("x", {{"name", "{name}"}}), "Hello {name}, {literal}");
}

TEST(TemplateTest, ShippedTemplatesLoadWithChecksums) {
  TemplateSet t = TemplateSet::Load(DefaultTemplateDir());
  for (const char* name : {"caption", "gt_summary", "tagless_summary", "extract_tags",
                           "extract_tags_strict", "detect_stage1", "detect_stage2",
                           "detect_fhm", "detect_item", "detect_item_notags",
                           "detect_retry"}) {
    EXPECT_TRUE(t.Has(name)) << name;
  }
  EXPECT_EQ(t.Checksums()["caption"].get<std::string>().size(), 64u);
  TempDir empty;
  EXPECT_THROW(TemplateSet::Load(empty.path()), ConfigError);
}

TEST(ParseTagListTest, CleansMarkersQuotesAndDuplicates) {
  TaggingOptions o;
  o.stoplist = {"meme"};
  auto p = ParseTagList("Tags: 1. \"Trump\", - Politics\n* meme, politics., 'USA'", o);
  EXPECT_TRUE(p.parseable);
  EXPECT_EQ(p.tags, (std::vector<std::string>{"trump", "politics", "usa"}));
}

TEST(ParseTagListTest, LimitsAndUnparseableProse) {
  TaggingOptions o;
  o.max_tags = 3;
  EXPECT_EQ(ParseTagList("a, b, c, d, e", o).tags.size(), 3u);
  std::string prose(250, 'x');
  EXPECT_FALSE(ParseTagList(prose, o).parseable);
  Warnings w;
  auto p = ParseTagList("ok, " + std::string(100, 'y'), o, &w);
  EXPECT_EQ(p.tags, std::vector<std::string>{"ok"});
  EXPECT_EQ(w.size(), 1u);
}

TEST(RedactTest, RemovesNestedReappearances) {
  // Removing "ab" from "aabb" leaves "ab" again.
  EXPECT_EQ(RedactTags("xaabby", {"ab"}), "xy");
  EXPECT_EQ(RedactTags("Trump TRUMP trumpet", {"trump"}), "  et");
  EXPECT_EQ(RedactTags("keep", {"", "  "}), "keep");
}

class PipelineTest : public ::testing::Test {
 protected:
  PipelineTest() : gw_(StubGatewayConfig(), svc_.transport()) {
    corpus_ = memeguard::testing::MakeFixtureCorpus(dir_.path(), {.n = 6});
    templates_ = TemplateSet::Load(DefaultTemplateDir());
  }
  TempDir dir_;
  FakeModelService svc_;
  gateway::ModelGateway gw_;
  corpus::Corpus corpus_;
  TemplateSet templates_;
};

TEST_F(PipelineTest, GroundTruthPromptCarriesTagsAndExpansions) {
  TaggingPipeline p(gw_, templates_);
  const auto& post = corpus_.records[0];
  EnrichedContext ctx = p.BuildContext(corpus_, post, true);
  EXPECT_EQ(ctx.tag_expansions.size(), post.tags.size());
  auto req = p.BuildGroundTruthPrompt(corpus_, post, ctx);
  ASSERT_EQ(req.messages.size(), 1u);
  EXPECT_EQ(req.messages[0].images.size(), 1u);
  for (const auto& tag : post.tags) {
    EXPECT_NE(req.messages[0].text.find("- " + tag + ": Background on"), std::string::npos);
  }
  EXPECT_EQ(req.model_id, gw_.config().Model("teacher"));
}

// Property: no gold tag survives anywhere in a tagless prompt, even when the
// title, OCR text, caption and web context are built from the tags.
TEST_F(PipelineTest, TaglessPromptNeverLeaksTags) {
  TaggingPipeline p(gw_, templates_);
  DeterministicRng rng(5);
  const std::vector<std::string> words = {"Election", "cats", "web", "Meme", "OCR", "taxes",
                                          "summary", "you", "are", "image", "TITLE"};
  for (int trial = 0; trial < 300; ++trial) {
    corpus::PostRecord post = corpus_.records[trial % corpus_.size()];
    post.tags.clear();
    size_t n_tags = 1 + rng.Below(3);
    for (size_t i = 0; i < n_tags; ++i) {
      post.tags.push_back(text::ToLowerAscii(words[rng.Below(words.size())]));
    }
    auto mix = [&] {
      std::string s;
      for (int i = 0; i < 6; ++i) s += words[rng.Below(words.size())] + (rng.Below(2) ? " " : "");
      return s;
    };
    post.title = mix();
    post.ocr_text = mix();
    EnrichedContext ctx;
    ctx.caption = mix();
    ctx.lens_clean = mix();
    std::string prompt = p.BuildTaglessPrompt(corpus_, post, ctx).messages[0].text;
    for (const auto& tag : post.tags) {
      ASSERT_FALSE(text::ContainsCaseInsensitive(prompt, tag)) << tag << " in\n" << prompt;
    }
  }
}

TEST_F(PipelineTest, PredictTagsStoresSummaryAndParsesTags) {
  TaggingPipeline p(gw_, templates_);
  SummaryStore store;
  auto tags = p.PredictTags(corpus_, corpus_.records[1], &store);
  EXPECT_FALSE(tags.empty());
  auto s = store.Get(corpus_.records[1].id, SummaryKind::kGenerated);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->model_id, gw_.config().Model("summary"));
}

TEST_F(PipelineTest, ExtractionRetriesStrictThenFails) {
  int calls = 0;
  auto t = std::make_shared<gateway::StubTransport>([&](const gateway::HttpRequest& r) {
    ++calls;
    bool strict = r.body.find("Output only the comma-separated") != std::string::npos;
    std::string content = strict ? "alpha, beta" : std::string(300, 'z');
    json reply = {{"choices", {{{"message", {{"content", content}}}}}}};
    return gateway::HttpResponse{200, reply.dump()};
  });
  gateway::ModelGateway gw(StubGatewayConfig(), t);
  TaggingPipeline p(gw, templates_);
  EXPECT_EQ(p.ExtractTags({"p", SummaryKind::kGenerated, "a summary", "m"}),
            (std::vector<std::string>{"alpha", "beta"}));
  EXPECT_EQ(calls, 2);

  auto never = std::make_shared<gateway::StubTransport>([](const gateway::HttpRequest&) {
    json reply = {{"choices", {{{"message", {{"content", std::string(300, 'z')}}}}}}};
    return gateway::HttpResponse{200, reply.dump()};
  });
  gateway::ModelGateway gw2(StubGatewayConfig(), never);
  TaggingPipeline p2(gw2, templates_);
  EXPECT_THROW(p2.ExtractTags({"p9", SummaryKind::kGenerated, "s", "m"}), ExternalServiceError);
}

TEST_F(PipelineTest, MissingInpaintedImageFallsBackWithWarning) {
  TaggingOptions o;
  o.inpainted_dir = dir_ / "inpainted";
  memeguard::testing::WriteBlockImage(dir_ / "inpainted" / corpus_.records[0].image_path, 99);
  TaggingPipeline p(gw_, templates_, o);
  p.GenerateCaption(corpus_, corpus_.records[0]);
  EXPECT_TRUE(gw_.warnings().empty());
  p.GenerateCaption(corpus_, corpus_.records[1]);
  EXPECT_EQ(gw_.warnings().size(), 1u);
}

TEST_F(PipelineTest, GroundTruthNeedsTags) {
  TaggingPipeline p(gw_, templates_);
  corpus::PostRecord post = corpus_.records[0];
  post.tags.clear();
  EXPECT_THROW(p.BuildGroundTruthPrompt(corpus_, post, {}), ValidationError);
}

TEST(SummaryStoreTest, SaveLoadRoundTripSorted) {
  TempDir dir;
  SummaryStore s;
  s.Put({"b", SummaryKind::kGenerated, "two", "m"});
  s.Put({"a", SummaryKind::kGroundTruth, "one", "m"});
  s.Put({"a", SummaryKind::kGroundTruth, "one again", "m"});
  s.Save(dir / "s.jsonl");
  SummaryStore loaded = SummaryStore::Load(dir / "s.jsonl");
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded.All()[0].post_id, "a");
  EXPECT_EQ(loaded.Get("a", SummaryKind::kGroundTruth)->text, "one again");
  EXPECT_EQ(SummaryStore::Load(dir / "absent.jsonl").size(), 0u);
  memeguard::testing::WriteText(dir / "bad.jsonl", "{\"post_id\":\"x\",\"kind\":\"odd\"}\n");
  EXPECT_THROW(SummaryStore::Load(dir / "bad.jsonl"), ValidationError);
}

TEST_F(PipelineTest, ExportFinetuneUsesTrainOnly) {
  SummaryStore s;
  for (const auto& p : corpus_.records) {
    if (p.id != "p005") s.Put({p.id, SummaryKind::kGroundTruth, "summary of " + p.id, "t"});
  }
  TaggingPipeline p(gw_, templates_);
  // Fixture puts p000..p001 in test when n_test = 2.
  corpus::Corpus c = corpus_;
  for (size_t i = 0; i < c.size(); ++i) c.records[i].split = i < 2 ? Split::kTest : Split::kTrain;
  ExportReport r = ExportFinetuneData(c, s, FinetuneTask::kTags, p, dir_ / "ft.jsonl");
  EXPECT_EQ(r.exported, 3u);
  EXPECT_EQ(r.skipped_not_train, 2u);
  EXPECT_EQ(r.skipped_missing_summary, 1u);
  std::vector<json> lines;
  jsonl::ForEachRecord(dir_ / "ft.jsonl", [&](size_t, const json& j) { lines.push_back(j); });
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0]["target"], text::Join(c.records[2].tags, ", "));
  EXPECT_NE(lines[0]["input"].get<std::string>().find("summary of p002"), std::string::npos);
}

}  // namespace
}  // namespace memeguard::tagging
