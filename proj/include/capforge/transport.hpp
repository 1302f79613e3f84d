#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace capforge {

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Raised by a transport when no HTTP response was obtained at all
/// (connection refused, timeout). Retryable.
class TransportFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// POSTs a JSON body to a path and returns the raw response.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual auto post(std::string_view path, const std::string& body) -> HttpResponse = 0;
};

/// Real network transport over HTTP(S), backed by cpp-httplib.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string base_url, std::chrono::milliseconds timeout,
                std::optional<std::string> api_key = std::nullopt);
  ~HttpTransport() override;

  auto post(std::string_view path, const std::string& body) -> HttpResponse override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace capforge
