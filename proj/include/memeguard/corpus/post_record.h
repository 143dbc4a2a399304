#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memeguard/common/labels.h"

namespace memeguard::corpus {

// Pixel-space rectangle around one OCR text region. These double as the
// inpainting masks handed to the external inpainting tool.
struct OcrBox {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool operator==(const OcrBox&) const = default;
};

struct PostRecord {
  std::string id;
  std::string image_path;  // relative to the manifest directory
  std::string title;
  std::string ocr_text;
  std::vector<OcrBox> ocr_boxes;
  std::vector<std::string> tags;
  int64_t comment_count = 0;
  std::string stream;
  std::optional<std::string> lens_context_raw;
  std::optional<std::string> lens_context_clean;
  std::optional<Stage1Label> stage1_label;
  std::optional<Stage2Label> stage2_label;
  std::optional<Split> split;

  bool operator==(const PostRecord&) const = default;
};

// Manifest (de)serialization. Keys are the snake_case field names; absent
// or null optional fields load as nullopt. Throws ValidationError with a
// field-specific message on schema violations.
PostRecord PostFromJson(const nlohmann::json& j);
nlohmann::json PostToJson(const PostRecord& post);

// Checks the record-level invariants (non-empty id, comment_count >= 0,
// stage2 only on toxic). Throws ValidationError.
void ValidatePost(const PostRecord& post);

}  // namespace memeguard::corpus
