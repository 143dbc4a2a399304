#include "memeguard/corpus/post_record.h"

#include <set>

#include "memeguard/common/errors.h"

namespace memeguard::corpus {
namespace {

using nlohmann::json;

const std::set<std::string>& KnownKeys() {
  static const std::set<std::string> kKeys = {
      "id",           "image_path",         "title",
      "ocr_text",     "ocr_boxes",          "tags",
      "comment_count", "stream",            "lens_context_raw",
      "lens_context_clean", "stage1_label", "stage2_label",
      "split"};
  return kKeys;
}

std::string RequireString(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
  if (!it->is_string()) {
    throw ValidationError(std::string("field '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

std::string OptionalString(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return "";
  if (!it->is_string()) {
    throw ValidationError(std::string("field '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

std::optional<std::string> NullableString(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw ValidationError(std::string("field '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

OcrBox BoxFromJson(const json& j) {
  if (!j.is_object()) throw ValidationError("ocr box must be an object");
  OcrBox box;
  auto get = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) {
      throw ValidationError(std::string("ocr box field '") + key +
                            "' must be an integer");
    }
    return it->get<int>();
  };
  box.x = get("x");
  box.y = get("y");
  box.width = get("w");
  box.height = get("h");
  if (box.width < 0 || box.height < 0) {
    throw ValidationError("ocr box has negative extent");
  }
  return box;
}

}  // namespace

PostRecord PostFromJson(const json& j) {
  if (!j.is_object()) throw ValidationError("record is not an object");
  for (const auto& [key, value] : j.items()) {
    if (!KnownKeys().count(key)) throw ValidationError("unknown field '" + key + "'");
  }
  PostRecord post;
  post.id = RequireString(j, "id");
  post.image_path = RequireString(j, "image_path");
  post.title = RequireString(j, "title");
  post.ocr_text = OptionalString(j, "ocr_text");
  post.stream = OptionalString(j, "stream");

  if (auto it = j.find("ocr_boxes"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("field 'ocr_boxes' must be an array");
    for (const json& box : *it) post.ocr_boxes.push_back(BoxFromJson(box));
  }

  auto tags = j.find("tags");
  if (tags == j.end()) throw ValidationError("missing field 'tags'");
  if (!tags->is_array()) throw ValidationError("field 'tags' must be an array");
  for (const json& tag : *tags) {
    if (!tag.is_string()) throw ValidationError("tags must be strings");
    post.tags.push_back(tag.get<std::string>());
  }

  auto count = j.find("comment_count");
  if (count == j.end()) throw ValidationError("missing field 'comment_count'");
  if (!count->is_number_integer()) {
    throw ValidationError("field 'comment_count' must be an integer");
  }
  post.comment_count = count->get<int64_t>();

  post.lens_context_raw = NullableString(j, "lens_context_raw");
  post.lens_context_clean = NullableString(j, "lens_context_clean");

  if (auto s = NullableString(j, "stage1_label")) {
    post.stage1_label = ParseStage1Label(*s);
    if (!post.stage1_label) throw ValidationError("unknown stage1_label '" + *s + "'");
  }
  if (auto s = NullableString(j, "stage2_label")) {
    post.stage2_label = ParseStage2Label(*s);
    if (!post.stage2_label) throw ValidationError("unknown stage2_label '" + *s + "'");
  }
  if (auto s = NullableString(j, "split")) {
    post.split = ParseSplit(*s);
    if (!post.split) throw ValidationError("unknown split '" + *s + "'");
  }
  ValidatePost(post);
  return post;
}

json PostToJson(const PostRecord& post) {
  json j;
  j["id"] = post.id;
  j["image_path"] = post.image_path;
  j["title"] = post.title;
  j["ocr_text"] = post.ocr_text;
  j["ocr_boxes"] = json::array();
  for (const OcrBox& box : post.ocr_boxes) {
    j["ocr_boxes"].push_back(
        {{"x", box.x}, {"y", box.y}, {"w", box.width}, {"h", box.height}});
  }
  j["tags"] = post.tags;
  j["comment_count"] = post.comment_count;
  j["stream"] = post.stream;
  if (post.lens_context_raw) j["lens_context_raw"] = *post.lens_context_raw;
  if (post.lens_context_clean) j["lens_context_clean"] = *post.lens_context_clean;
  if (post.stage1_label) j["stage1_label"] = std::string(ToString(*post.stage1_label));
  if (post.stage2_label) j["stage2_label"] = std::string(ToString(*post.stage2_label));
  if (post.split) j["split"] = std::string(ToString(*post.split));
  return j;
}

void ValidatePost(const PostRecord& post) {
  if (post.id.empty()) throw ValidationError("id must be non-empty");
  if (post.comment_count < 0) throw ValidationError("comment_count must be >= 0");
  if (post.stage2_label && post.stage1_label != Stage1Label::kToxic) {
    throw ValidationError("stage2_label present on a post not labelled toxic");
  }
}

}  // namespace memeguard::corpus
