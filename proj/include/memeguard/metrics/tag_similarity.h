#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memeguard/common/warnings.h"
#include "memeguard/gateway/gateway.h"

namespace memeguard::metrics {

using PairSimilarity = std::function<double(const std::string&, const std::string&)>;

// Mean over gt tags of the best similarity against any generated tag.
// Empty gen -> 0 with a warning; empty gt throws ValidationError.
double MeanOfMax(const std::vector<std::string>& gt, const std::vector<std::string>& gen,
                 const PairSimilarity& sim, Warnings* warnings = nullptr);

enum class TagSimMethod { kSemantic, kTokenF1, kConceptNet };

std::string_view ToString(TagSimMethod method);
std::optional<TagSimMethod> ParseTagSimMethod(std::string_view text);

struct TagSimReport {
  TagSimMethod method = TagSimMethod::kSemantic;
  bool expanded = false;
  std::map<std::string, double> per_post;  // 0..100
  double mean = 0.0;                       // 0..100
  std::vector<std::string> warnings;

  nlohmann::json ToJson() const;
};

// Greedy-matching F1 between two token sequences given token embeddings:
// recall = mean over reference tokens of their best cosine against the
// candidate, precision the other way round.
double TokenF1(const std::vector<std::string>& candidate_tokens,
               const std::vector<std::string>& reference_tokens,
               const std::function<gateway::EmbeddingVector(const std::string&)>& embed);

// Tag-set similarity metrics backed by the gateway.
class TagSimilarityScorer {
 public:
  explicit TagSimilarityScorer(gateway::ModelGateway& gateway) : gateway_(gateway) {}

  // Pairwise similarity of two tags under `method`, in [-1, 1]. With
  // `expanded`, both tags are replaced by their search expansions (the tag
  // itself when its expansion is empty). ConceptNet cannot be expanded.
  double Pair(const std::string& a, const std::string& b, TagSimMethod method, bool expanded);

  // Per-post score (x100), Warnings about empty generated sets collected.
  double Score(const std::vector<std::string>& gt, const std::vector<std::string>& gen,
               TagSimMethod method, bool expanded, Warnings* warnings = nullptr);

  // Scores every post id present in `gt`; posts missing from `gen` count
  // as empty generated sets.
  TagSimReport Evaluate(const std::map<std::string, std::vector<std::string>>& gt,
                        const std::map<std::string, std::vector<std::string>>& gen,
                        TagSimMethod method, bool expanded, int workers = 1);

 private:
  std::string ExpansionOrTag(const std::string& tag);

  gateway::ModelGateway& gateway_;
};

// Sentence-embedding cosine x 100 through the gateway's text embedder.
double SbertCosine(gateway::ModelGateway& gateway, const std::string& candidate,
                   const std::string& reference);

}  // namespace memeguard::metrics
