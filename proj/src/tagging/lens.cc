#include "memeguard/tagging/lens.h"

#include <regex>

#include "memeguard/common/text.h"

namespace memeguard::tagging {
namespace {

const std::regex& UrlPattern() {
  static const std::regex kRe(
      R"((?:\b(?:check(?:\s+(?:it\s+)?out)?|visit|see|via|source:?|link:?)\s+)?)"
      R"((?:https?://|www\.)\S+)",
      std::regex::ECMAScript | std::regex::icase);
  return kRe;
}

const std::regex& PlatformPrefixPattern() {
  static const std::regex kRe(R"((^|[\s(\[])/?[ru]/(?=\w))",
                              std::regex::ECMAScript | std::regex::icase);
  return kRe;
}

const std::regex& MetricPattern() {
  static const std::regex kRe(
      R"(\b\d+(?:[.,]\d+)*\s*[kmb]?\+?\s*)"
      R"((?:likes?|views?|comments?|shares?|upvotes?|points?|followers?|retweets?|reposts?|)"
      R"(reactions?|votes?)\b)",
      std::regex::ECMAScript | std::regex::icase);
  return kRe;
}

const std::regex& MentionPattern() {
  static const std::regex kRe(R"((^|[^\w@])@\w+)", std::regex::ECMAScript);
  return kRe;
}

bool IsEmoji(char32_t cp) {
  return (cp >= 0x1F000 && cp <= 0x1FAFF) ||  // pictographs, emoticons, flags
         (cp >= 0x2600 && cp <= 0x27BF) ||    // misc symbols, dingbats
         (cp >= 0x2300 && cp <= 0x23FF) ||    // watch, hourglass, media keys
         (cp >= 0x2B00 && cp <= 0x2BFF) ||    // stars, arrows
         (cp >= 0xFE00 && cp <= 0xFE0F) ||    // variation selectors
         (cp >= 0xE0020 && cp <= 0xE007F) ||  // tag sequences
         cp == 0x200D || cp == 0x20E3 || cp == 0x3030 || cp == 0x303D ||
         cp == 0x3297 || cp == 0x3299;
}

bool IsLatinOrCommon(char32_t cp) {
  if (cp < 0x20) return cp == '\t' || cp == '\n' || cp == '\r';
  if (cp == 0x7F || (cp >= 0x80 && cp < 0xA0)) return false;  // control codes
  if (cp <= 0x024F) return true;                  // Basic Latin .. Latin Extended-B
  if (cp >= 0x1E00 && cp <= 0x1EFF) return true;  // Latin Extended Additional
  if (cp >= 0x2000 && cp <= 0x206F) return cp != 0x200D;  // general punctuation
  if (cp >= 0x20A0 && cp <= 0x20CF) return true;  // currency symbols
  return false;
}

// Replaces each maximal run of code points matching `drop` with one space.
template <typename Pred>
std::string DropRuns(std::string_view s, Pred drop) {
  std::string out;
  bool in_run = false;
  for (char32_t cp : text::DecodeUtf8(s)) {
    if (drop(cp)) {
      if (!in_run) out.push_back(' ');
      in_run = true;
    } else {
      in_run = false;
      text::AppendUtf8(cp, &out);
    }
  }
  return out;
}

}  // namespace

std::string CleanLensContext(std::string_view raw) {
  // One removal can expose another (dropping an emoji in front of "u/x",
  // removing a mention in front of "/r/x"), so the rules run to a fixed
  // point. Each pass only shrinks the text, which bounds the loop.
  std::string s = text::CollapseWhitespace(raw);
  for (;;) {
    std::string next = std::regex_replace(s, UrlPattern(), " ");
    next = DropRuns(next, IsEmoji);
    next = DropRuns(next, [](char32_t cp) { return !IsLatinOrCommon(cp); });
    next = std::regex_replace(next, PlatformPrefixPattern(), "$1");
    next = std::regex_replace(next, MetricPattern(), " ");
    next = std::regex_replace(next, MentionPattern(), "$1 ");
    next = text::CollapseWhitespace(next);
    if (next == s) return s;
    s = std::move(next);
  }
}

}  // namespace memeguard::tagging
