
#include <httplib.h>

#include "capforge/transport.hpp"

namespace capforge {

struct HttpTransport::Impl {
  std::string base_url;
  std::chrono::milliseconds timeout;
  std::optional<std::string> api_key;
};

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds timeout,
                             std::optional<std::string> api_key)
    : impl_(std::make_unique<Impl>(Impl{std::move(base_url), timeout, std::move(api_key)}))
{
}

HttpTransport::~HttpTransport() = default;

auto HttpTransport::post(std::string_view path, const std::string& body) -> HttpResponse
{
  httplib::Client client(impl_->base_url);
  client.set_connection_timeout(impl_->timeout);
  client.set_read_timeout(impl_->timeout);
  client.set_write_timeout(impl_->timeout);
  httplib::Headers headers;
  if (impl_->api_key) {
    headers.emplace("Authorization", "Bearer " + *impl_->api_key);
  }
  auto result = client.Post(std::string(path), headers, body, "application/json");
  if (!result) {
    throw TransportFailure("POST " + std::string(path) + " failed: " + httplib::to_string(result.error()));
  }
  return {result->status, result->body};
}

}  // namespace capforge
