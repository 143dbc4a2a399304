#include "memeguard/common/labels.h"

namespace memeguard {

std::string_view ToString(Stage stage) {
  return stage == Stage::kI ? "I" : "II";
}

std::string_view ToString(Stage1Label label) {
  return label == Stage1Label::kToxic ? "toxic" : "normal";
}

std::string_view ToString(Stage2Label label) {
  switch (label) {
    case Stage2Label::kHateful:
      return "hateful";
    case Stage2Label::kDangerous:
      return "dangerous";
    case Stage2Label::kOffensive:
      return "offensive";
    case Stage2Label::kUndecided:
      return "undecided";
  }
  return "";
}

std::string_view ToString(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

std::optional<Stage> ParseStage(std::string_view text) {
  if (text == "I" || text == "1") return Stage::kI;
  if (text == "II" || text == "2") return Stage::kII;
  return std::nullopt;
}

std::optional<Stage1Label> ParseStage1Label(std::string_view text) {
  if (text == "toxic") return Stage1Label::kToxic;
  if (text == "normal") return Stage1Label::kNormal;
  return std::nullopt;
}

std::optional<Stage2Label> ParseStage2Label(std::string_view text) {
  if (text == "hateful") return Stage2Label::kHateful;
  if (text == "dangerous") return Stage2Label::kDangerous;
  if (text == "offensive") return Stage2Label::kOffensive;
  if (text == "undecided") return Stage2Label::kUndecided;
  return std::nullopt;
}

std::optional<Split> ParseSplit(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  return std::nullopt;
}

const std::vector<std::string>& AssignableLabels(Stage stage) {
  static const std::vector<std::string> kStage1 = {"toxic", "normal"};
  static const std::vector<std::string> kStage2 = {"hateful", "dangerous",
                                                   "offensive"};
  return stage == Stage::kI ? kStage1 : kStage2;
}

}  // namespace memeguard
