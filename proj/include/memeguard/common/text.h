#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace memeguard::text {

// ASCII whitespace only; multibyte UTF-8 sequences are left untouched.
std::string Trim(std::string_view s);
std::string ToLowerAscii(std::string_view s);
std::string CollapseWhitespace(std::string_view s);

std::vector<std::string> SplitAny(std::string_view s, std::string_view delims);

// Lowercase alphanumeric runs; everything else separates tokens.
std::vector<std::string> WordTokens(std::string_view s);

bool ContainsCaseInsensitive(std::string_view haystack, std::string_view needle);

// Replaces every case-insensitive occurrence of `needle` with `replacement`.
std::string ReplaceCaseInsensitive(std::string_view haystack,
                                   std::string_view needle,
                                   std::string_view replacement);

std::string Join(const std::vector<std::string>& parts, std::string_view sep);

// UTF-8 helpers. Invalid bytes decode as U+FFFD and consume one byte.
std::vector<char32_t> DecodeUtf8(std::string_view s);
void AppendUtf8(char32_t cp, std::string* out);
std::string EncodeUtf8(const std::vector<char32_t>& cps);

// Truncates to at most `max_bytes` without splitting a code point.
std::string TruncateUtf8(std::string_view s, size_t max_bytes);

}  // namespace memeguard::text
