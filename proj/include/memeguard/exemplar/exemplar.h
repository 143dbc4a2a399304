#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "memeguard/common/warnings.h"
#include "memeguard/corpus/corpus.h"
#include "memeguard/gateway/gateway.h"

namespace memeguard::exemplar {

enum class StrategyKind {
  kRandom,
  kImage,
  kGtTags,
  kPredTags,
  kImageGtCombined,
  kImagePredCombined
};

std::string_view ToString(StrategyKind kind);
// Accepts the names above (random, image, gt_tags, pred_tags,
// image_gt_combined, image_pred_combined).
std::optional<StrategyKind> ParseStrategyKind(std::string_view text);

bool IsCombined(StrategyKind kind);
bool UsesTags(StrategyKind kind);
bool UsesPredictedTags(StrategyKind kind);

struct SelectionStrategy {
  StrategyKind kind = StrategyKind::kRandom;
  int k = 4;
  std::optional<double> alpha;  // combined kinds only
  uint64_t seed = 0;            // random kind only

  // Throws ValidationError: k >= 1, alpha in [0, 1] and present iff combined.
  void Validate() const;
  nlohmann::json ToJson() const;
};

struct ScoredCandidate {
  std::string post_id;
  double image_sim = 0.0;
  double tag_sim = 0.0;
  double combined = 0.0;  // the score the strategy ranks by
};

using TextEmbedder = std::function<gateway::EmbeddingVector(const std::string&)>;

// Mean over query tags of the best cosine against any candidate tag. Either
// set empty -> 0 with a warning.
double TagSetSimilarity(const std::vector<std::string>& query,
                        const std::vector<std::string>& candidate, const TextEmbedder& embed,
                        Warnings* warnings = nullptr);

// Orders by descending `combined`, ties by ascending post id, and keeps the
// first k.
std::vector<ScoredCandidate> TopK(std::vector<ScoredCandidate> scored, size_t k);

// Where embeddings come from. The gateway-backed source is the real one;
// tests plug in fixed tables.
class EmbeddingSource {
 public:
  virtual ~EmbeddingSource() = default;
  virtual gateway::EmbeddingVector Image(const std::filesystem::path& image) = 0;
  virtual gateway::EmbeddingVector Tag(const std::string& tag) = 0;
};

class GatewayEmbeddingSource : public EmbeddingSource {
 public:
  explicit GatewayEmbeddingSource(gateway::ModelGateway& gateway) : gateway_(gateway) {}
  gateway::EmbeddingVector Image(const std::filesystem::path& image) override;
  gateway::EmbeddingVector Tag(const std::string& tag) override;

 private:
  gateway::ModelGateway& gateway_;
  std::mutex mu_;
  std::map<std::string, gateway::EmbeddingVector> images_;
  std::map<std::string, gateway::EmbeddingVector> tags_;
};

using PredictedTags = std::map<std::string, std::vector<std::string>>;

// Reads {"id": ..., "tags": [...]} lines, as written by `tags predict`.
PredictedTags LoadPredictedTags(const std::filesystem::path& path);

// Scores a fixed exemplar pool against query posts. The pool is filtered
// once: test-split posts never enter it. The query itself is removed per
// call.
class ExemplarSelector {
 public:
  ExemplarSelector(const corpus::Corpus& pool, EmbeddingSource& embeddings,
                   const PredictedTags* predicted = nullptr, Warnings* warnings = nullptr);

  // Every eligible candidate with its image, tag and combined score. For the
  // random kind, scores are zero and the order is the seeded draw order.
  std::vector<ScoredCandidate> ScoreAll(const corpus::Corpus& query_corpus,
                                        const corpus::PostRecord& query,
                                        const SelectionStrategy& strategy);

  // k exemplar ids: descending score with ties by id, or draw order for
  // the random kind.
  std::vector<std::string> Select(const corpus::Corpus& query_corpus,
                                  const corpus::PostRecord& query,
                                  const SelectionStrategy& strategy);

  // Fetches every pool embedding the strategy will need, `workers` at a
  // time. Optional: scoring fetches lazily, but one by one.
  void Warm(const SelectionStrategy& strategy, int workers);

  const std::vector<const corpus::PostRecord*>& candidates() const { return candidates_; }

 private:
  const std::vector<std::string>& TagsOf(const corpus::PostRecord& post, bool predicted) const;
  std::vector<double> ImageScores(const corpus::Corpus& query_corpus,
                                  const corpus::PostRecord& query);
  std::vector<double> TagScores(const corpus::PostRecord& query, bool predicted);
  size_t TagIndex(const std::string& tag);

  const corpus::Corpus& pool_;
  EmbeddingSource& embeddings_;
  const PredictedTags* predicted_;
  Warnings* warnings_;
  std::vector<const corpus::PostRecord*> candidates_;

  std::mutex mu_;
  std::vector<gateway::EmbeddingVector> pool_images_;  // lazily filled
  std::unordered_map<std::string, size_t> tag_index_;
  std::vector<gateway::EmbeddingVector> tag_vectors_;
};

struct AlphaScore {
  double alpha = 0.0;
  std::optional<double> macro_f1;  // nullopt if the evaluation failed
  size_t n_eval = 0;
  std::string error;
};

struct AlphaTuning {
  double best_alpha = 0.0;
  std::vector<AlphaScore> table;  // 11 rows, alpha = 0.0, 0.1, ..., 1.0
};

// Objective returns (macro_f1, n_eval) for one alpha.
using AlphaObjective = std::function<std::pair<double, size_t>(double alpha)>;

// Evaluates the 11-point grid. Highest macro-F1 wins, ties toward smaller
// alpha. A throwing objective marks that alpha invalid; all invalid throws.
AlphaTuning TuneAlpha(const AlphaObjective& objective);

// {alpha, macro_f1, n_eval} per line; invalid rows carry macro_f1 null.
void WriteAlphaTable(const AlphaTuning& tuning, const std::filesystem::path& path);

}  // namespace memeguard::exemplar
