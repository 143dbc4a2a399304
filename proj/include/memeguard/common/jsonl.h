#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace memeguard::jsonl {

using Json = nlohmann::json;

struct LineError {
  size_t line_number;  // 1-based
  std::string message;
};

// Calls `on_record` for every non-blank line that parses as JSON. Lines that
// fail to parse, or for which `on_record` throws, are reported in the result
// and skipped. A missing file throws ValidationError.
std::vector<LineError> ForEachRecord(
    const std::filesystem::path& path,
    const std::function<void(size_t line_number, const Json& record)>& on_record);

// One compact JSON object per line. nlohmann's object type keeps keys
// sorted, which makes the output stable for diffing.
std::string Dump(const std::vector<Json>& records);

void WriteFile(const std::filesystem::path& path, const std::vector<Json>& records);

}  // namespace memeguard::jsonl
