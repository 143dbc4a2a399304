#include "memeguard/exemplar/exemplar.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/parallel.h"
#include "memeguard/common/random.h"

namespace memeguard::exemplar {
namespace {

using corpus::Corpus;
using corpus::PostRecord;
using gateway::EmbeddingVector;

struct KindName {
  StrategyKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {StrategyKind::kRandom, "random"},
    {StrategyKind::kImage, "image"},
    {StrategyKind::kGtTags, "gt_tags"},
    {StrategyKind::kPredTags, "pred_tags"},
    {StrategyKind::kImageGtCombined, "image_gt_combined"},
    {StrategyKind::kImagePredCombined, "image_pred_combined"},
};

}  // namespace

std::string_view ToString(StrategyKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<StrategyKind> ParseStrategyKind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

bool IsCombined(StrategyKind kind) {
  return kind == StrategyKind::kImageGtCombined || kind == StrategyKind::kImagePredCombined;
}

bool UsesTags(StrategyKind kind) {
  return kind == StrategyKind::kGtTags || kind == StrategyKind::kPredTags || IsCombined(kind);
}

bool UsesPredictedTags(StrategyKind kind) {
  return kind == StrategyKind::kPredTags || kind == StrategyKind::kImagePredCombined;
}

void SelectionStrategy::Validate() const {
  if (k < 1) throw ValidationError(fmt::format("shot count must be >= 1, got {}", k));
  if (IsCombined(kind)) {
    if (!alpha) throw ValidationError(std::string(ToString(kind)) + " needs an alpha");
    if (!(*alpha >= 0.0 && *alpha <= 1.0)) {
      throw ValidationError(fmt::format("alpha must lie in [0, 1], got {}", *alpha));
    }
  } else if (alpha) {
    throw ValidationError("alpha only applies to combined strategies");
  }
}

nlohmann::json SelectionStrategy::ToJson() const {
  nlohmann::json j = {{"kind", std::string(ToString(kind))}, {"k", k}};
  if (alpha) j["alpha"] = *alpha;
  if (kind == StrategyKind::kRandom) j["seed"] = seed;
  return j;
}

double TagSetSimilarity(const std::vector<std::string>& query,
                        const std::vector<std::string>& candidate, const TextEmbedder& embed,
                        Warnings* warnings) {
  if (query.empty() || candidate.empty()) {
    Warn(warnings, "tag similarity against an empty tag set scored 0");
    return 0.0;
  }
  std::vector<EmbeddingVector> cand;
  cand.reserve(candidate.size());
  for (const auto& e : candidate) cand.push_back(embed(e));
  double total = 0.0;
  for (const auto& t : query) {
    EmbeddingVector q = embed(t);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : cand) best = std::max(best, gateway::Cosine(q, e));
    total += best;
  }
  return total / static_cast<double>(query.size());
}

std::vector<ScoredCandidate> TopK(std::vector<ScoredCandidate> scored, size_t k) {
  auto better = [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.combined != b.combined) return a.combined > b.combined;
    return a.post_id < b.post_id;
  };
  k = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                    scored.end(), better);
  scored.resize(k);
  return scored;
}

EmbeddingVector GatewayEmbeddingSource::Image(const std::filesystem::path& image) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = images_.find(image.string()); it != images_.end()) return it->second;
  }
  EmbeddingVector v = gateway_.EmbedImage(image);
  std::lock_guard<std::mutex> lock(mu_);
  return images_.emplace(image.string(), std::move(v)).first->second;
}

EmbeddingVector GatewayEmbeddingSource::Tag(const std::string& tag) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = tags_.find(tag); it != tags_.end()) return it->second;
  }
  EmbeddingVector v = gateway_.EmbedText(tag);
  std::lock_guard<std::mutex> lock(mu_);
  return tags_.emplace(tag, std::move(v)).first->second;
}

PredictedTags LoadPredictedTags(const std::filesystem::path& path) {
  PredictedTags out;
  auto errors = jsonl::ForEachRecord(path, [&](size_t, const nlohmann::json& j) {
    if (!j.contains("id") || !j.contains("tags")) {
      throw ValidationError("predicted-tag record needs 'id' and 'tags'");
    }
    out[j["id"].get<std::string>()] = j["tags"].get<std::vector<std::string>>();
  });
  if (!errors.empty()) {
    throw ValidationError(fmt::format("{}:{}: {}", path.string(), errors[0].line_number,
                                      errors[0].message));
  }
  return out;
}

ExemplarSelector::ExemplarSelector(const Corpus& pool, EmbeddingSource& embeddings,
                                   const PredictedTags* predicted, Warnings* warnings)
    : pool_(pool), embeddings_(embeddings), predicted_(predicted), warnings_(warnings) {
  for (const PostRecord& post : pool_.records) {
    if (post.split == Split::kTest) continue;
    candidates_.push_back(&post);
  }
  std::sort(candidates_.begin(), candidates_.end(),
            [](const PostRecord* a, const PostRecord* b) { return a->id < b->id; });
}

const std::vector<std::string>& ExemplarSelector::TagsOf(const PostRecord& post,
                                                         bool predicted) const {
  if (!predicted) return post.tags;
  if (predicted_ == nullptr) {
    throw ValidationError("strategy needs predicted tags but none were loaded");
  }
  auto it = predicted_->find(post.id);
  if (it == predicted_->end()) throw ValidationError("no predicted tags for post " + post.id);
  return it->second;
}

size_t ExemplarSelector::TagIndex(const std::string& tag) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = tag_index_.find(tag); it != tag_index_.end()) return it->second;
  }
  EmbeddingVector v = embeddings_.Tag(tag);
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = tag_index_.emplace(tag, tag_vectors_.size());
  if (inserted) tag_vectors_.push_back(std::move(v));
  return it->second;
}

void ExemplarSelector::Warm(const SelectionStrategy& strategy, int workers) {
  if (strategy.kind == StrategyKind::kImage || IsCombined(strategy.kind)) {
    std::lock_guard<std::mutex> lock(mu_);
    if (pool_images_.size() != candidates_.size()) {
      std::vector<EmbeddingVector> images(candidates_.size());
      ParallelFor(candidates_.size(), workers, [&](size_t i) {
        images[i] = embeddings_.Image(pool_.ImagePath(*candidates_[i]));
      });
      pool_images_ = std::move(images);
    }
  }
  if (UsesTags(strategy.kind)) {
    std::vector<std::string> vocab;
    for (const PostRecord* c : candidates_) {
      for (const auto& t : TagsOf(*c, UsesPredictedTags(strategy.kind))) vocab.push_back(t);
    }
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    ParallelFor(vocab.size(), workers, [&](size_t i) { embeddings_.Tag(vocab[i]); });
    for (const auto& t : vocab) TagIndex(t);
  }
}

std::vector<double> ExemplarSelector::ImageScores(const Corpus& query_corpus,
                                                  const PostRecord& query) {
  EmbeddingVector q = embeddings_.Image(query_corpus.ImagePath(query));
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (pool_images_.size() != candidates_.size()) {
      pool_images_.clear();
      for (const PostRecord* c : candidates_) {
        pool_images_.push_back(embeddings_.Image(pool_.ImagePath(*c)));
      }
    }
  }
  std::vector<double> scores(candidates_.size());
  for (size_t i = 0; i < candidates_.size(); ++i) scores[i] = gateway::Cosine(q, pool_images_[i]);
  return scores;
}

std::vector<double> ExemplarSelector::TagScores(const PostRecord& query, bool predicted) {
  std::vector<double> scores(candidates_.size(), 0.0);
  const auto& query_tags = TagsOf(query, predicted);
  if (query_tags.empty()) {
    Warn(warnings_, "post " + query.id + " has no tags; tag similarity scored 0");
    return scores;
  }
  std::vector<EmbeddingVector> q;
  for (const auto& t : query_tags) q.push_back(embeddings_.Tag(t));

  // Similarity of each query tag to each vocabulary tag, filled on demand.
  std::vector<std::vector<double>> memo(q.size());
  size_t untagged = 0;
  for (size_t i = 0; i < candidates_.size(); ++i) {
    const auto& cand_tags = TagsOf(*candidates_[i], predicted);
    if (cand_tags.empty()) {
      ++untagged;
      continue;
    }
    std::vector<size_t> idx;
    for (const auto& e : cand_tags) idx.push_back(TagIndex(e));
    double total = 0.0;
    for (size_t t = 0; t < q.size(); ++t) {
      double best = -std::numeric_limits<double>::infinity();
      for (size_t j : idx) {
        if (memo[t].size() <= j) memo[t].resize(j + 1, std::nan(""));
        if (std::isnan(memo[t][j])) {
          std::lock_guard<std::mutex> lock(mu_);
          memo[t][j] = gateway::Cosine(q[t], tag_vectors_[j]);
        }
        best = std::max(best, memo[t][j]);
      }
      total += best;
    }
    scores[i] = total / static_cast<double>(q.size());
  }
  if (untagged == candidates_.size()) {
    throw ValidationError("every exemplar candidate lacks tags; tag-based selection impossible");
  }
  if (untagged > 0) {
    Warn(warnings_, fmt::format("{} exemplar candidates without tags scored 0", untagged));
  }
  return scores;
}

std::vector<ScoredCandidate> ExemplarSelector::ScoreAll(const Corpus& query_corpus,
                                                        const PostRecord& query,
                                                        const SelectionStrategy& strategy) {
  strategy.Validate();
  std::vector<size_t> eligible;
  for (size_t i = 0; i < candidates_.size(); ++i) {
    if (candidates_[i]->id != query.id) eligible.push_back(i);
  }
  if (eligible.size() < static_cast<size_t>(strategy.k)) {
    throw ValidationError(fmt::format("exemplar pool has {} candidates, {} requested",
                                      eligible.size(), strategy.k));
  }

  std::vector<ScoredCandidate> out;
  out.reserve(eligible.size());
  if (strategy.kind == StrategyKind::kRandom) {
    DeterministicRng rng(StableHash64(query.id, strategy.seed));
    for (size_t i = 0; i + 1 < eligible.size(); ++i) {
      size_t j = i + static_cast<size_t>(rng.Below(eligible.size() - i));
      std::swap(eligible[i], eligible[j]);
    }
    for (size_t i : eligible) out.push_back({candidates_[i]->id, 0.0, 0.0, 0.0});
    return out;
  }

  const bool use_image = strategy.kind == StrategyKind::kImage || IsCombined(strategy.kind);
  const bool use_tags = UsesTags(strategy.kind);
  std::vector<double> image = use_image ? ImageScores(query_corpus, query) : std::vector<double>{};
  std::vector<double> tags =
      use_tags ? TagScores(query, UsesPredictedTags(strategy.kind)) : std::vector<double>{};
  const double alpha = strategy.alpha.value_or(0.0);
  for (size_t i : eligible) {
    ScoredCandidate c{candidates_[i]->id, use_image ? image[i] : 0.0, use_tags ? tags[i] : 0.0,
                      0.0};
    if (IsCombined(strategy.kind)) {
      c.combined = alpha * c.image_sim + (1.0 - alpha) * c.tag_sim;
    } else {
      c.combined = use_image ? c.image_sim : c.tag_sim;
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::string> ExemplarSelector::Select(const Corpus& query_corpus,
                                                  const PostRecord& query,
                                                  const SelectionStrategy& strategy) {
  std::vector<ScoredCandidate> scored = ScoreAll(query_corpus, query, strategy);
  const size_t k = static_cast<size_t>(strategy.k);
  if (strategy.kind == StrategyKind::kRandom) {
    scored.resize(k);
  } else {
    scored = TopK(std::move(scored), k);
  }
  std::vector<std::string> ids;
  for (const auto& c : scored) ids.push_back(c.post_id);
  return ids;
}

AlphaTuning TuneAlpha(const AlphaObjective& objective) {
  AlphaTuning tuning;
  std::optional<double> best_score;
  for (int i = 0; i <= 10; ++i) {
    AlphaScore row;
    row.alpha = i / 10.0;
    try {
      auto [f1, n] = objective(row.alpha);
      row.macro_f1 = f1;
      row.n_eval = n;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (row.macro_f1 && (!best_score || *row.macro_f1 > *best_score)) {
      best_score = row.macro_f1;
      tuning.best_alpha = row.alpha;
    }
    tuning.table.push_back(std::move(row));
  }
  if (!best_score) {
    throw ValidationError("alpha tuning failed at every grid point: " + tuning.table[0].error);
  }
  return tuning;
}

void WriteAlphaTable(const AlphaTuning& tuning, const std::filesystem::path& path) {
  std::vector<nlohmann::json> lines;
  for (const AlphaScore& row : tuning.table) {
    nlohmann::json j = {{"alpha", row.alpha}, {"n_eval", row.n_eval}};
    j["macro_f1"] = row.macro_f1 ? nlohmann::json(*row.macro_f1) : nlohmann::json(nullptr);
    lines.push_back(std::move(j));
  }
  jsonl::WriteFile(path, lines);
}

}  // namespace memeguard::exemplar
