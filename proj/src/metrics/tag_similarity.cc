#include "memeguard/metrics/tag_similarity.h"

#include <limits>

#include <fmt/format.h>

#include "memeguard/common/errors.h"
#include "memeguard/common/parallel.h"
#include "memeguard/common/text.h"
#include "memeguard/metrics/text_metrics.h"

namespace memeguard::metrics {

double MeanOfMax(const std::vector<std::string>& gt, const std::vector<std::string>& gen,
                 const PairSimilarity& sim, Warnings* warnings) {
  if (gt.empty()) throw ValidationError("tag similarity needs at least one ground-truth tag");
  if (gen.empty()) {
    Warn(warnings, "empty generated tag set scored 0");
    return 0.0;
  }
  double total = 0.0;
  for (const auto& g : gt) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& h : gen) best = std::max(best, sim(g, h));
    total += best;
  }
  return total / static_cast<double>(gt.size());
}

std::string_view ToString(TagSimMethod method) {
  switch (method) {
    case TagSimMethod::kSemantic:
      return "semantic";
    case TagSimMethod::kTokenF1:
      return "token_f1";
    case TagSimMethod::kConceptNet:
      return "conceptnet";
  }
  return "";
}

std::optional<TagSimMethod> ParseTagSimMethod(std::string_view text) {
  if (text == "semantic") return TagSimMethod::kSemantic;
  if (text == "token_f1") return TagSimMethod::kTokenF1;
  if (text == "conceptnet") return TagSimMethod::kConceptNet;
  return std::nullopt;
}

nlohmann::json TagSimReport::ToJson() const {
  return {{"method", std::string(ToString(method))},
          {"expanded", expanded},
          {"mean", mean},
          {"n_posts", per_post.size()},
          {"per_post", per_post},
          {"warnings", warnings}};
}

double TokenF1(const std::vector<std::string>& candidate_tokens,
               const std::vector<std::string>& reference_tokens,
               const std::function<gateway::EmbeddingVector(const std::string&)>& embed) {
  if (candidate_tokens.empty() || reference_tokens.empty()) return 0.0;
  std::vector<gateway::EmbeddingVector> c, r;
  for (const auto& t : candidate_tokens) c.push_back(embed(t));
  for (const auto& t : reference_tokens) r.push_back(embed(t));
  auto greedy = [](const std::vector<gateway::EmbeddingVector>& from,
                   const std::vector<gateway::EmbeddingVector>& to) {
    double total = 0.0;
    for (const auto& a : from) {
      double best = -1.0;
      for (const auto& b : to) best = std::max(best, gateway::Cosine(a, b));
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  double recall = greedy(r, c);
  double precision = greedy(c, r);
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::string TagSimilarityScorer::ExpansionOrTag(const std::string& tag) {
  std::string expansion = gateway_.ExpandTag(tag).text;
  return expansion.empty() ? tag : expansion;
}

double TagSimilarityScorer::Pair(const std::string& a, const std::string& b,
                                 TagSimMethod method, bool expanded) {
  if (method == TagSimMethod::kConceptNet) {
    if (expanded) {
      throw ValidationError("ConceptNet similarity is defined on terms, not expansions");
    }
    return gateway_.ConceptNetRelatedness(a, b);
  }
  std::string x = expanded ? ExpansionOrTag(a) : a;
  std::string y = expanded ? ExpansionOrTag(b) : b;
  if (method == TagSimMethod::kSemantic) {
    return gateway::Cosine(gateway_.EmbedText(x), gateway_.EmbedText(y));
  }
  auto embed = [this](const std::string& t) { return gateway_.EmbedText(t); };
  auto tx = MetricTokens(x), ty = MetricTokens(y);
  // Tags made only of punctuation ("9/11" keeps its digits; "??" does not)
  // fall back to the raw string as a single token.
  if (tx.empty()) tx = {x};
  if (ty.empty()) ty = {y};
  return TokenF1(ty, tx, embed);
}

double TagSimilarityScorer::Score(const std::vector<std::string>& gt,
                                  const std::vector<std::string>& gen, TagSimMethod method,
                                  bool expanded, Warnings* warnings) {
  if (method == TagSimMethod::kConceptNet && expanded) {
    throw ValidationError("ConceptNet similarity cannot be combined with expansion");
  }
  return 100.0 * MeanOfMax(
                     gt, gen,
                     [&](const std::string& g, const std::string& h) {
                       return Pair(g, h, method, expanded);
                     },
                     warnings);
}

TagSimReport TagSimilarityScorer::Evaluate(
    const std::map<std::string, std::vector<std::string>>& gt,
    const std::map<std::string, std::vector<std::string>>& gen, TagSimMethod method,
    bool expanded, int workers) {
  if (method == TagSimMethod::kConceptNet && expanded) {
    throw ValidationError("ConceptNet similarity cannot be combined with expansion");
  }
  TagSimReport report;
  report.method = method;
  report.expanded = expanded;
  std::vector<std::string> ids;
  for (const auto& [id, tags] : gt) {
    if (tags.empty()) {
      report.warnings.push_back("post " + id + " has no ground-truth tags; skipped");
      continue;
    }
    ids.push_back(id);
  }
  if (ids.empty()) throw ValidationError("no posts with ground-truth tags to evaluate");
  std::vector<double> scores(ids.size());
  Warnings sink;
  static const std::vector<std::string> kEmpty;
  ParallelFor(ids.size(), workers, [&](size_t i) {
    auto it = gen.find(ids[i]);
    const auto& generated = it == gen.end() ? kEmpty : it->second;
    Warnings local;
    scores[i] = Score(gt.at(ids[i]), generated, method, expanded, &local);
    for (auto& w : local.Snapshot()) sink.Add("post " + ids[i] + ": " + w);
  });
  double total = 0.0;
  for (size_t i = 0; i < ids.size(); ++i) {
    report.per_post[ids[i]] = scores[i];
    total += scores[i];
  }
  report.mean = total / static_cast<double>(ids.size());
  auto collected = sink.Snapshot();
  std::sort(collected.begin(), collected.end());
  report.warnings.insert(report.warnings.end(), collected.begin(), collected.end());
  return report;
}

double SbertCosine(gateway::ModelGateway& gateway, const std::string& candidate,
                   const std::string& reference) {
  return 100.0 * gateway::Cosine(gateway.EmbedText(candidate), gateway.EmbedText(reference));
}

}  // namespace memeguard::metrics
