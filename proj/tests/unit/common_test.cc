#include <gtest/gtest.h>

#include "fixtures.h"
#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/labels.h"
#include "memeguard/common/parallel.h"
#include "memeguard/common/random.h"
#include "memeguard/common/text.h"

namespace memeguard {
namespace {

TEST(TextTest, TrimAndCollapse) {
  EXPECT_EQ(text::Trim("  a b \t\n"), "a b");
  EXPECT_EQ(text::CollapseWhitespace("  a \n\n b\tc "), "a b c");
  EXPECT_EQ(text::ToLowerAscii("ÄBC"), "Äbc");
}

TEST(TextTest, WordTokensSplitOnPunctuation) {
  EXPECT_EQ(text::WordTokens("Don't STOP-me, 9/11!"),
            (std::vector<std::string>{"don", "t", "stop", "me", "9", "11"}));
}

TEST(TextTest, ReplaceCaseInsensitive) {
  EXPECT_EQ(text::ReplaceCaseInsensitive("Trump and TRUMP", "trump", "_"), "_ and _");
  EXPECT_TRUE(text::ContainsCaseInsensitive("Hello World", "WORLD"));
  EXPECT_FALSE(text::ContainsCaseInsensitive("Hello", "bye"));
}

TEST(TextTest, Utf8RoundTripAndTruncate) {
  std::string s = "héllo 😀";
  EXPECT_EQ(text::EncodeUtf8(text::DecodeUtf8(s)), s);
  EXPECT_EQ(text::DecodeUtf8(s).size(), 7u);
  // The emoji is four bytes; cutting inside it drops it whole.
  EXPECT_EQ(text::TruncateUtf8(s, s.size() - 1), "héllo ");
  EXPECT_EQ(text::DecodeUtf8("\xff")[0], U'�');
}

TEST(DigestTest, KnownVectors) {
  EXPECT_EQ(Sha256Hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(Base64Encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(Base64Encode("fo"), "Zm8=");
  EXPECT_EQ(StableHash64(""), 0xcbf29ce484222325ULL);
}

TEST(DigestTest, AtomicWriteThenRead) {
  testing::TempDir dir;
  WriteFileAtomic(dir / "a.txt", "payload");
  EXPECT_EQ(ReadFileBytes(dir / "a.txt"), "payload");
  EXPECT_EQ(Sha256FileHex(dir / "a.txt"), Sha256Hex("payload"));
}

TEST(RandomTest, SameSeedSameStream) {
  DeterministicRng a(42), b(42), c(43);
  std::vector<int> xs(20), ys(20);
  for (int i = 0; i < 20; ++i) xs[i] = ys[i] = i;
  a.Shuffle(xs);
  b.Shuffle(ys);
  EXPECT_EQ(xs, ys);
  EXPECT_NE(a.Next(), c.Next());
}

TEST(RandomTest, BelowStaysInRange) {
  DeterministicRng rng(7);
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 5000; ++i) {
    uint64_t v = rng.Below(5);
    ASSERT_LT(v, 5u);
    ++hist[v];
  }
  for (int h : hist) EXPECT_GT(h, 800);
}

TEST(LabelsTest, ParseIsStrict) {
  EXPECT_EQ(ParseStage1Label("toxic"), Stage1Label::kToxic);
  EXPECT_FALSE(ParseStage1Label("Toxic").has_value());
  EXPECT_EQ(ParseStage2Label("undecided"), Stage2Label::kUndecided);
  EXPECT_EQ(ParseStage("II"), Stage::kII);
  EXPECT_EQ(AssignableLabels(Stage::kII).size(), 3u);
  for (const auto& l : AssignableLabels(Stage::kII)) EXPECT_NE(l, kUndecided);
}

TEST(JsonlTest, ReportsBadLinesAndKeepsGoodOnes) {
  testing::TempDir dir;
  testing::WriteText(dir / "x.jsonl", "{\"a\":1}\n\nnot json\n{\"a\":2}\n");
  std::vector<int> seen;
  auto errors = jsonl::ForEachRecord(dir / "x.jsonl", [&](size_t, const jsonl::Json& j) {
    seen.push_back(j.at("a").get<int>());
  });
  EXPECT_EQ(seen, (std::vector<int>{1, 2}));
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].line_number, 3u);
  EXPECT_THROW(jsonl::ForEachRecord(dir / "missing.jsonl", [](size_t, const jsonl::Json&) {}),
               ValidationError);
}

TEST(ParallelTest, VisitsEveryIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  ParallelFor(100, 4, [&](size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(ParallelFor(10, 3,
                           [](size_t i) {
                             if (i == 5) throw std::runtime_error("boom");
                           }),
               std::runtime_error);
}

}  // namespace
}  // namespace memeguard
