#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "memeguard/common/random.h"
#include "memeguard/corpus/corpus.h"
#include "memeguard/exemplar/exemplar.h"
#include "memeguard/gateway/config.h"
#include "memeguard/gateway/gateway.h"
#include "memeguard/gateway/transport.h"

namespace memeguard::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// 64x64 PNG made of an 8x8 grid of seeded gray blocks. Different seeds give
// structurally different images (distinct difference hashes).
void WriteBlockImage(const std::filesystem::path& path, uint64_t seed);

void WriteText(const std::filesystem::path& path, const std::string& text);

struct FixtureOptions {
  size_t n = 30;
  uint64_t seed = 1;
  size_t n_test = 10;  // the first n_test ids go to the test split
};

// Posts p000, p001, ... with images on disk, 2-4 tags from a small
// vocabulary, Stage I labels for every post and Stage II labels for every
// toxic one. The manifest is written to <dir>/manifest.jsonl.
corpus::Corpus MakeFixtureCorpus(const std::filesystem::path& dir, const FixtureOptions& options);

// Deterministic embedding derived from the SHA-256 of `input`.
std::vector<double> HashEmbedding(const std::string& input, size_t dim = 16);

// In-process stand-in for every external service the gateway talks to.
// Routes by URL:
//   http://stub/chat         chat completions
//   http://stub/embeddings   text and image embeddings
//   http://stub/search       search snippets
//   http://stub/conceptnet   relatedness
// Chat answers depend only on the request, so a run through this service is
// reproducible. The classifier answer is delegated to `classify`, which gets
// the query post id (parsed from "Title: <id> ...") and the system prompt.
class FakeModelService {
 public:
  using Classifier = std::function<std::string(const std::string& post_id,
                                               const std::string& system)>;

  FakeModelService();

  std::shared_ptr<gateway::StubTransport> transport() const { return transport_; }
  void set_classifier(Classifier c);
  // Labels by post id; stage I, II and fhm are told apart by the system text.
  void set_oracle(const corpus::Corpus& corpus);
  // Status returned for every request while non-zero.
  void set_failure_status(int status);

  gateway::HttpResponse Handle(const gateway::HttpRequest& request);

 private:
  std::string Chat(const nlohmann::json& body);

  std::mutex mu_;
  Classifier classify_;
  int failure_status_ = 0;
  std::shared_ptr<gateway::StubTransport> transport_;
};

// Embeddings from fixed tables: images by file stem, tags by text.
class TableEmbeddingSource : public exemplar::EmbeddingSource {
 public:
  gateway::EmbeddingVector Image(const std::filesystem::path& image) override {
    return images.at(image.stem().string());
  }
  gateway::EmbeddingVector Tag(const std::string& tag) override { return tags.at(tag); }

  std::map<std::string, gateway::EmbeddingVector> images;
  std::map<std::string, gateway::EmbeddingVector> tags;
};

gateway::EmbeddingVector RandomUnit(DeterministicRng& rng, size_t dim);
// Unit vector along axis i.
gateway::EmbeddingVector Basis(size_t i, size_t dim);

// Gateway config pointing at FakeModelService; one attempt, no backoff.
gateway::GatewayConfig StubGatewayConfig();

}  // namespace memeguard::testing
