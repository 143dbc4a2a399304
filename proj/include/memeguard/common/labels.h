#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memeguard {

enum class Stage { kI, kII };

enum class Stage1Label { kToxic, kNormal };

// kUndecided is produced only by majority-vote finalization.
enum class Stage2Label { kHateful, kDangerous, kOffensive, kUndecided };

enum class Split { kTrain, kTest };

std::string_view ToString(Stage stage);
std::string_view ToString(Stage1Label label);
std::string_view ToString(Stage2Label label);
std::string_view ToString(Split split);

// Parsers are case-sensitive on the canonical lowercase spellings and
// return nullopt for anything else.
std::optional<Stage> ParseStage(std::string_view text);
std::optional<Stage1Label> ParseStage1Label(std::string_view text);
std::optional<Stage2Label> ParseStage2Label(std::string_view text);
std::optional<Split> ParseSplit(std::string_view text);

// Labels a single annotator may choose at the given stage (never undecided).
const std::vector<std::string>& AssignableLabels(Stage stage);

inline constexpr std::string_view kUndecided = "undecided";

}  // namespace memeguard
