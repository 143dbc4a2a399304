#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memeguard/common/labels.h"

namespace memeguard::metrics {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t support = 0;  // gold instances
  size_t predicted = 0;
};

struct MetricReport {
  double macro_f1 = 0.0;  // 0..100
  double accuracy = 0.0;  // 0..100
  size_t n = 0;
  std::map<std::string, ClassScores> per_class;
  std::vector<std::string> warnings;
  std::string config_digest;

  nlohmann::json ToJson() const;
};

// gold/pred pairs scored over the explicit class list. A prediction outside
// `classes` (an unparseable answer) is a miss for its gold class and a false
// positive for nobody. Per-class F1 uses 0/0 -> 0; classes without gold
// instances score 0 and add a warning. Empty input throws ValidationError.
MetricReport MacroF1(const std::vector<std::pair<std::string, std::string>>& gold_pred,
                     const std::vector<std::string>& classes);

// Final label from exactly three annotator labels of one stage. Stage I
// always resolves; Stage II with three distinct labels is "undecided".
// Throws ValidationError on wrong arity or a label outside the stage's
// assignable set.
std::string MajorityVote(Stage stage, const std::vector<std::string>& labels);

struct AgreementReport {
  double kappa = 0.0;
  double p_bar = 0.0;    // mean observed agreement
  double p_e = 0.0;      // chance agreement
  size_t n_items = 0;
  size_t n_raters = 0;
  std::vector<double> marginals;  // per-category proportion of all ratings

  nlohmann::json ToJson(const std::vector<std::string>& categories = {}) const;
};

// Fleiss' kappa over an items x categories count matrix. Every row must sum
// to the same n >= 2. When all ratings fall in one category (chance
// agreement 1) kappa is 1.
AgreementReport FleissKappa(const std::vector<std::vector<int>>& counts);

}  // namespace memeguard::metrics
