#include "memeguard/metrics/classification.h"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "memeguard/common/errors.h"

namespace memeguard::metrics {
namespace {

double Ratio(size_t num, size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

nlohmann::json MetricReport::ToJson() const {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [label, s] : per_class) {
    classes[label] = {{"precision", s.precision},
                      {"recall", s.recall},
                      {"f1", s.f1},
                      {"support", s.support},
                      {"predicted", s.predicted}};
  }
  return {{"macro_f1", macro_f1}, {"accuracy", accuracy},        {"n", n},
          {"per_class", classes}, {"warnings", warnings},        {"config_digest", config_digest}};
}

MetricReport MacroF1(const std::vector<std::pair<std::string, std::string>>& gold_pred,
                     const std::vector<std::string>& classes) {
  if (gold_pred.empty()) throw ValidationError("macro-F1 over an empty prediction set");
  if (classes.empty()) throw ValidationError("macro-F1 needs at least one class");
  std::set<std::string> class_set(classes.begin(), classes.end());

  std::map<std::string, size_t> tp, gold_count, pred_count;
  size_t correct = 0;
  for (const auto& [gold, pred] : gold_pred) {
    if (!class_set.count(gold)) {
      throw ValidationError("gold label '" + gold + "' is not one of the evaluated classes");
    }
    ++gold_count[gold];
    if (class_set.count(pred)) ++pred_count[pred];
    if (gold == pred) {
      ++tp[gold];
      ++correct;
    }
  }

  MetricReport report;
  report.n = gold_pred.size();
  double sum = 0.0;
  for (const std::string& c : classes) {
    ClassScores s;
    s.support = gold_count[c];
    s.predicted = pred_count[c];
    s.precision = Ratio(tp[c], s.predicted);
    s.recall = Ratio(tp[c], s.support);
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    if (s.support == 0) {
      report.warnings.push_back(
          fmt::format("class '{}' has no gold instances; F1 counted as 0", c));
    }
    sum += s.f1;
    report.per_class[c] = s;
  }
  report.macro_f1 = 100.0 * sum / static_cast<double>(classes.size());
  report.accuracy = 100.0 * Ratio(correct, report.n);
  return report;
}

std::string MajorityVote(Stage stage, const std::vector<std::string>& labels) {
  if (labels.size() != 3) {
    throw ValidationError(
        fmt::format("majority vote needs exactly 3 labels, got {}", labels.size()));
  }
  const auto& allowed = AssignableLabels(stage);
  for (const auto& l : labels) {
    if (std::find(allowed.begin(), allowed.end(), l) == allowed.end()) {
      throw ValidationError(fmt::format("'{}' is not an assignable Stage {} label", l,
                                        ToString(stage)));
    }
  }
  if (labels[0] == labels[1] || labels[0] == labels[2]) return labels[0];
  if (labels[1] == labels[2]) return labels[1];
  // Three distinct labels can only happen with three assignable labels.
  return std::string(kUndecided);
}

nlohmann::json AgreementReport::ToJson(const std::vector<std::string>& categories) const {
  nlohmann::json marg = nlohmann::json::object();
  for (size_t j = 0; j < marginals.size(); ++j) {
    std::string name = j < categories.size() ? categories[j] : std::to_string(j);
    marg[name] = marginals[j];
  }
  return {{"kappa", kappa}, {"p_bar", p_bar},     {"p_e", p_e},
          {"n_items", n_items}, {"n_raters", n_raters}, {"marginals", marg}};
}

AgreementReport FleissKappa(const std::vector<std::vector<int>>& counts) {
  if (counts.empty()) throw ValidationError("Fleiss' kappa over zero items");
  const size_t k = counts[0].size();
  if (k == 0) throw ValidationError("Fleiss' kappa needs at least one category");
  long n = -1;
  for (size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].size() != k) throw ValidationError("ragged rating matrix");
    long row = 0;
    for (int c : counts[i]) {
      if (c < 0) throw ValidationError("negative rating count");
      row += c;
    }
    if (n < 0) n = row;
    if (row != n) {
      throw ValidationError(fmt::format("item {} has {} ratings, expected {}", i, row, n));
    }
  }
  if (n < 2) throw ValidationError("Fleiss' kappa needs at least 2 raters per item");

  AgreementReport r;
  r.n_items = counts.size();
  r.n_raters = static_cast<size_t>(n);
  const double N = static_cast<double>(counts.size());
  const double nn = static_cast<double>(n);
  r.marginals.assign(k, 0.0);
  double p_sum = 0.0;
  for (const auto& row : counts) {
    double sq = 0.0;
    for (size_t j = 0; j < k; ++j) {
      sq += static_cast<double>(row[j]) * row[j];
      r.marginals[j] += row[j];
    }
    p_sum += (sq - nn) / (nn * (nn - 1.0));
  }
  r.p_bar = p_sum / N;
  for (double& m : r.marginals) {
    m /= N * nn;
    r.p_e += m * m;
  }
  if (std::abs(1.0 - r.p_e) < 1e-15) {
    // Only one category was ever used, so every item is unanimous.
    if (std::abs(1.0 - r.p_bar) > 1e-12) {
      throw ValidationError("Fleiss' kappa undefined: chance agreement is 1");
    }
    r.kappa = 1.0;
    return r;
  }
  r.kappa = (r.p_bar - r.p_e) / (1.0 - r.p_e);
  return r;
}

}  // namespace memeguard::metrics
