#include "memeguard/common/jsonl.h"

#include <fstream>

#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"

namespace memeguard::jsonl {

std::vector<LineError> ForEachRecord(
    const std::filesystem::path& path,
    const std::function<void(size_t, const Json&)>& on_record) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open manifest: " + path.string());
  std::vector<LineError> errors;
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      errors.push_back({line_number, std::string("malformed JSON: ") + e.what()});
      continue;
    }
    try {
      on_record(line_number, record);
    } catch (const std::exception& e) {
      errors.push_back({line_number, e.what()});
    }
  }
  return errors;
}

std::string Dump(const std::vector<Json>& records) {
  std::string out;
  for (const Json& record : records) {
    out += record.dump(-1, ' ', false, Json::error_handler_t::replace);
    out.push_back('\n');
  }
  return out;
}

void WriteFile(const std::filesystem::path& path, const std::vector<Json>& records) {
  WriteFileAtomic(path, Dump(records));
}

}  // namespace memeguard::jsonl
