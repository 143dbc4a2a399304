#pragma once

#include <mutex>
#include <string>
#include <vector>

namespace memeguard {

// Thread-safe sink for non-fatal diagnostics that must travel with results
// (degraded tag expansions, empty tag sets, absent classes).
class Warnings {
 public:
  void Add(std::string message) {
    std::lock_guard<std::mutex> lock(mu_);
    messages_.push_back(std::move(message));
  }

  std::vector<std::string> Snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    return messages_;
  }

  size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return messages_.size();
  }

  bool empty() const { return size() == 0; }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> messages_;
};

inline void Warn(Warnings* sink, std::string message) {
  if (sink != nullptr) sink->Add(std::move(message));
}

}  // namespace memeguard
