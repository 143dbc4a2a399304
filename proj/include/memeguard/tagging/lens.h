#pragma once

#include <string>
#include <string_view>

namespace memeguard::tagging {

// Cleans a "Title -- Description" web-match snippet before it goes into a
// prompt. Steps, in order:
//
//   1. trim
//   2. drop URLs, together with a link lead-in word right before them
//      ("check", "check out", "visit", "see", "via", "source:", "link:")
//   3. drop platform prefixes r/ and u/ (the name after them is kept)
//   4. drop emoji
//   5. drop engagement counts such as "2.5K likes" or "3M views"
//   6. drop @mentions
//   7. drop code points outside the Latin script blocks, general
//      punctuation and currency symbols
//   8. collapse whitespace
//
// Removed spans are replaced by a space, never glued together, which keeps
// the function idempotent.
std::string CleanLensContext(std::string_view raw);

}  // namespace memeguard::tagging
