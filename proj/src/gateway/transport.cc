#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "memeguard/gateway/transport.h"

#include "memeguard/common/errors.h"

namespace memeguard::gateway {

std::pair<std::string, std::string> SplitUrl(const std::string& url) {
  const size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint URL lacks a scheme: " + url);
  }
  const size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string UrlEncode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' ||
        c == '/') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0x0F]);
    }
  }
  return out;
}

HttpResponse HttpTransport::Send(const HttpRequest& request) {
  auto [origin, path] = SplitUrl(request.url);
  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
      request.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  for (const auto& [name, value] : request.headers) headers.emplace(name, value);

  httplib::Result result;
  if (request.method == "GET") {
    result = client.Get(path, headers);
  } else {
    result = client.Post(path, headers, request.body, "application/json");
  }
  if (!result) {
    throw TransportError("HTTP " + request.method + " " + request.url + " failed: " +
                         httplib::to_string(result.error()));
  }
  return {result->status, result->body};
}

}  // namespace memeguard::gateway
