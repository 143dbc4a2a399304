#include "fixtures.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "memeguard/common/digest.h"
#include "memeguard/common/random.h"
#include "memeguard/common/text.h"

namespace memeguard::testing {

using nlohmann::json;

TempDir::TempDir() {
  static std::atomic<uint64_t> counter{0};
  auto base = std::filesystem::temp_directory_path();
  DeterministicRng rng(static_cast<uint64_t>(
      std::chrono::steady_clock::now().time_since_epoch().count()));
  do {
    path_ = base / fmt::format("memeguard-test-{:x}-{}", rng.Next(), counter++);
  } while (std::filesystem::exists(path_));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void WriteBlockImage(const std::filesystem::path& path, uint64_t seed) {
  DeterministicRng rng(seed * 7919 + 17);
  cv::Mat grid(8, 8, CV_8UC1);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) grid.at<uint8_t>(r, c) = static_cast<uint8_t>(rng.Below(256));
  }
  cv::Mat image;
  cv::resize(grid, image, cv::Size(64, 64), 0, 0, cv::INTER_NEAREST);
  std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), image)) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

namespace {

const std::vector<std::string>& Vocabulary() {
  static const std::vector<std::string> v = {
      "election", "football", "immigration", "cats",    "religion", "pandemic",
      "music",    "weather",  "taxes",       "gaming",  "cooking",  "history"};
  return v;
}

}  // namespace

corpus::Corpus MakeFixtureCorpus(const std::filesystem::path& dir,
                                 const FixtureOptions& options) {
  DeterministicRng rng(options.seed);
  corpus::Corpus c;
  c.base_dir = dir;
  const auto& vocab = Vocabulary();
  for (size_t i = 0; i < options.n; ++i) {
    corpus::PostRecord p;
    p.id = fmt::format("p{:03d}", i);
    p.image_path = "images/" + p.id + ".png";
    WriteBlockImage(dir / p.image_path, options.seed * 1000 + i);
    size_t n_tags = 2 + rng.Below(3);
    std::set<size_t> picked;
    while (picked.size() < n_tags) picked.insert(rng.Below(vocab.size()));
    for (size_t t : picked) p.tags.push_back(vocab[t]);
    p.title = p.id + " about " + p.tags.front();
    p.ocr_text = "when the " + p.tags.back() + " news hits";
    p.comment_count = 2 + static_cast<int64_t>(rng.Below(20));
    p.stream = "fixture";
    bool toxic = rng.Below(2) == 0;
    p.stage1_label = toxic ? Stage1Label::kToxic : Stage1Label::kNormal;
    if (toxic) p.stage2_label = static_cast<Stage2Label>(rng.Below(3));
    p.split = i < options.n_test ? Split::kTest : Split::kTrain;
    c.records.push_back(std::move(p));
  }
  corpus::WriteManifest(c, dir / "manifest.jsonl");
  return c;
}

std::vector<double> HashEmbedding(const std::string& input, size_t dim) {
  std::vector<double> v;
  std::string digest = Sha256Hex(input);
  for (size_t i = 0; v.size() < dim; ++i) {
    if (i * 2 + 2 > digest.size()) {
      digest = Sha256Hex(digest);
      i = 0;
    }
    int byte = std::stoi(digest.substr(i * 2, 2), nullptr, 16);
    v.push_back((byte - 127.5) / 127.5);
  }
  return v;
}

FakeModelService::FakeModelService()
    : classify_([](const std::string&, const std::string&) { return "normal"; }) {
  transport_ = std::make_shared<gateway::StubTransport>(
      [this](const gateway::HttpRequest& r) { return Handle(r); });
}

void FakeModelService::set_classifier(Classifier c) {
  std::lock_guard<std::mutex> lock(mu_);
  classify_ = std::move(c);
}

void FakeModelService::set_failure_status(int status) {
  std::lock_guard<std::mutex> lock(mu_);
  failure_status_ = status;
}

void FakeModelService::set_oracle(const corpus::Corpus& corpus) {
  std::map<std::string, corpus::PostRecord> posts;
  for (const auto& p : corpus.records) posts[p.id] = p;
  set_classifier([posts](const std::string& id, const std::string& system) -> std::string {
    auto it = posts.find(id);
    if (it == posts.end()) return "no idea";
    const auto& p = it->second;
    bool toxic = p.stage1_label == Stage1Label::kToxic;
    if (text::ContainsCaseInsensitive(system, "already judged toxic")) {
      return p.stage2_label ? std::string(ToString(*p.stage2_label)) : "undecided";
    }
    if (text::ContainsCaseInsensitive(system, "not-hateful")) {
      return toxic ? "hateful" : "not-hateful";
    }
    return toxic ? "toxic" : "normal";
  });
}

namespace {

std::string SectionAfter(const std::string& text, const std::string& marker) {
  size_t at = text.find(marker);
  if (at == std::string::npos) return "";
  at += marker.size();
  size_t end = text.find("\n\n", at);
  return text::Trim(text.substr(at, end == std::string::npos ? std::string::npos : end - at));
}

std::string TextOf(const json& message) {
  std::string out;
  for (const auto& part : message.at("content")) {
    if (part.value("type", "") == "text") out += part.at("text").get<std::string>();
  }
  return out;
}

}  // namespace

std::string FakeModelService::Chat(const json& body) {
  const json& messages = body.at("messages");
  std::string system;
  std::string last_user;
  for (const auto& m : messages) {
    if (m.at("role") == "system") system = TextOf(m);
    if (m.at("role") == "user") last_user = TextOf(m);
  }
  if (!system.empty()) {
    std::string title = SectionAfter(last_user + "\n\n", "Title:");
    std::string id = title.substr(0, title.find(' '));
    std::lock_guard<std::mutex> lock(mu_);
    return classify_(id, system);
  }
  if (text::ContainsCaseInsensitive(last_user, "Describe this image")) {
    return "a cartoon figure pointing at a chart";
  }
  if (last_user.find("### Title") != std::string::npos) {
    std::string title = SectionAfter(last_user, "### Title\n");
    std::string tags = SectionAfter(last_user, "### Tags\n");
    std::string summary = "The meme titled " + title + " mocks a familiar situation.";
    if (!tags.empty()) summary += " It touches on " + tags + ".";
    return summary;
  }
  if (last_user.find("Summary:") != std::string::npos) {
    std::string summary = SectionAfter(last_user, "Summary:\n");
    static const std::set<std::string> skip = {"meme", "titled", "mocks", "familiar",
                                               "situation", "touches", "about", "when",
                                               "news", "hits", "with", "that", "this"};
    std::vector<std::string> tags;
    for (const auto& w : text::WordTokens(summary)) {
      if (w.size() < 4 || skip.count(w) || std::isdigit(static_cast<unsigned char>(w[0]))) {
        continue;
      }
      if (std::find(tags.begin(), tags.end(), w) == tags.end()) tags.push_back(w);
      if (tags.size() == 5) break;
    }
    return tags.empty() ? "misc" : text::Join(tags, ", ");
  }
  return "ok";
}

gateway::HttpResponse FakeModelService::Handle(const gateway::HttpRequest& request) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (failure_status_ != 0) return {failure_status_, R"({"error":"injected"})"};
  }
  const std::string& url = request.url;
  if (url.rfind("http://stub/chat", 0) == 0) {
    json body = json::parse(request.body);
    json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", Chat(body)}}}}}}};
    return {200, reply.dump()};
  }
  if (url.rfind("http://stub/embeddings", 0) == 0) {
    json body = json::parse(request.body);
    std::string input = body.at("input").get<std::string>();
    json reply = {{"data", {{{"embedding", HashEmbedding(input)}}}}};
    return {200, reply.dump()};
  }
  if (url.rfind("http://stub/search", 0) == 0) {
    std::string q = url.substr(url.find("q=") + 2);
    json reply = {{"items",
                   {{{"snippet", "Background on " + q + " from a reference site."}},
                    {{"snippet", "Discussion of " + q + " online."}}}}};
    return {200, reply.dump()};
  }
  if (url.rfind("http://stub/conceptnet", 0) == 0) {
    double v = static_cast<double>(StableHash64(url) % 1000) / 1000.0;
    return {200, json{{"value", v}}.dump()};
  }
  return {404, "{}"};
}

gateway::EmbeddingVector RandomUnit(DeterministicRng& rng, size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.Normal();
  return gateway::Normalize(std::move(v));
}

gateway::EmbeddingVector Basis(size_t i, size_t dim) {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return {std::move(v), true};
}

gateway::GatewayConfig StubGatewayConfig() {
  gateway::GatewayConfig config;
  config.chat_url = "http://stub/chat";
  config.embeddings_url = "http://stub/embeddings";
  config.search_url = "http://stub/search";
  config.conceptnet_url = "http://stub/conceptnet";
  config.max_attempts = 1;
  config.backoff = std::chrono::milliseconds(0);
  return config;
}

}  // namespace memeguard::testing
