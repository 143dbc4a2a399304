#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace memeguard::gateway {

struct HttpRequest {
  std::string method = "POST";
  std::string url;
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
  std::chrono::milliseconds timeout{60000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Connection-level failure: refused, reset, timed out. Always retryable.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse Send(const HttpRequest& request) = 0;
};

// Plain HTTP(S) client.
class HttpTransport : public Transport {
 public:
  HttpResponse Send(const HttpRequest& request) override;
};

// In-process transport that hands each request to a handler. Used by tests
// and by offline fixtures; counts every call it receives.
class StubTransport : public Transport {
 public:
  using Handler = std::function<HttpResponse(const HttpRequest&)>;

  explicit StubTransport(Handler handler) : handler_(std::move(handler)) {}

  HttpResponse Send(const HttpRequest& request) override {
    calls_.fetch_add(1);
    {
      std::lock_guard<std::mutex> lock(mu_);
      log_.push_back(request);
    }
    return handler_(request);
  }

  size_t calls() const { return calls_.load(); }

  std::vector<HttpRequest> log() const {
    std::lock_guard<std::mutex> lock(mu_);
    return log_;
  }

 private:
  Handler handler_;
  std::atomic<size_t> calls_{0};
  mutable std::mutex mu_;
  std::vector<HttpRequest> log_;
};

// Splits "http://host:port/path?q" into ("http://host:port", "/path?q").
std::pair<std::string, std::string> SplitUrl(const std::string& url);

std::string UrlEncode(std::string_view text);

}  // namespace memeguard::gateway
