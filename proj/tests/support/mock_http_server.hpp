#pragma once

#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "capforge/mock_backend.hpp"

namespace capforge::testing {

/// MockBackend served over real HTTP on an ephemeral loopback port.
class MockHttpServer {
 public:
  explicit MockHttpServer(MockBackend backend) : backend_(backend)
  {
    server_.Post(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex_);
        auth_headers_.push_back(req.get_header_value("Authorization"));
      }
      const auto r = backend_.handle(req.path, req.body);
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  MockHttpServer(const MockHttpServer&) = delete;
  auto operator=(const MockHttpServer&) -> MockHttpServer& = delete;
  ~MockHttpServer()
  {
    server_.stop();
    thread_.join();
  }

  [[nodiscard]] auto url() const -> std::string { return "http://127.0.0.1:" + std::to_string(port_); }
  [[nodiscard]] auto auth_headers() const -> std::vector<std::string>
  {
    std::lock_guard lock(mutex_);
    return auth_headers_;
  }

 private:
  MockBackend backend_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::vector<std::string> auth_headers_;
};

}  // namespace capforge::testing
