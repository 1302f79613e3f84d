#include <doctest.h>

#include <json.hpp>

#include "capforge/backend_client.hpp"
#include "capforge/cli.hpp"
#include "capforge/dataset_store.hpp"
#include "mock_http_server.hpp"
#include "test_support.hpp"

using namespace capforge;
using capforge::testing::errc_of;
using capforge::testing::MockHttpServer;
using nlohmann::json;

namespace {

auto fast_endpoint(const std::string& url) -> BackendEndpoint
{
  BackendEndpoint e;
  e.base_url = url;
  e.qps_limit = 1e6;
  e.timeout = std::chrono::milliseconds(2000);
  e.initial_backoff = std::chrono::milliseconds(1);
  e.max_backoff = std::chrono::milliseconds(1);
  return e;
}

}  // namespace

TEST_SUITE("http_backend")
{
  TEST_CASE("HTTP transport returns the same bytes as the in-process mock")
  {
    const MockBackend mock(0, 8);
    MockHttpServer server(mock);
    HttpTransport http(server.url(), std::chrono::milliseconds(2000));
    for (const auto& c : protocol_test_vectors().at("cases")) {
      if (c.at("seed") != 0 || c.at("dim") != 8) {
        continue;
      }
      const auto path = c.at("path").get<std::string>();
      const auto body = c.at("request").get<std::string>();
      const auto expected = mock.handle(path, body);
      const auto got = http.post(path, body);
      CAPTURE(path);
      CHECK(got.status == expected.status);
      CHECK(got.body == expected.body);
    }
    const auto caption = http.post("/v1/caption", R"({"image_uri":"a.png","n":3,"nucleus_p":0.9})");
    CHECK(caption.body == mock.handle("/v1/caption", R"({"image_uri":"a.png","n":3,"nucleus_p":0.9})").body);
  }

  TEST_CASE("clients over HTTP match clients over the in-process mock")
  {
    MockHttpServer server(MockBackend(4, 32));
    auto endpoint = fast_endpoint(server.url());
    EmbedderClient over_http(std::make_shared<RequestExecutor>(endpoint, make_transport(endpoint, 4, 32)), 32);
    auto mock_endpoint = fast_endpoint("mock://");
    EmbedderClient in_process(std::make_shared<RequestExecutor>(mock_endpoint, make_transport(mock_endpoint, 4, 32)),
                              32);
    CHECK(over_http.embed_text("a wooden chair") == in_process.embed_text("a wooden chair"));

    SummarizerClient sum_http(std::make_shared<RequestExecutor>(endpoint, make_transport(endpoint, 4, 32)));
    SummarizerClient sum_mock(std::make_shared<RequestExecutor>(mock_endpoint, make_transport(mock_endpoint, 4, 32)));
    const std::string prompt = "describe: 'a red chair, a blue chair'";
    CHECK(sum_http.summarize(prompt).text == sum_mock.summarize(prompt).text);
  }

  TEST_CASE("bearer token is sent when an API key is configured")
  {
    MockHttpServer server(MockBackend(0, 8));
    HttpTransport http(server.url(), std::chrono::milliseconds(2000), "tok-123");
    (void)http.post("/v1/embed", R"({"kind":"text","payload":"x"})");
    HttpTransport anonymous(server.url(), std::chrono::milliseconds(2000));
    (void)anonymous.post("/v1/embed", R"({"kind":"text","payload":"x"})");
    const auto headers = server.auth_headers();
    REQUIRE(headers.size() == 2);
    CHECK(headers[0] == "Bearer tok-123");
    CHECK(headers[1].empty());
  }

  TEST_CASE("unknown path is a protocol violation without retry")
  {
    MockHttpServer server(MockBackend(0, 8));
    auto endpoint = fast_endpoint(server.url());
    RequestExecutor executor(endpoint, make_transport(endpoint, 0, 8), [](std::chrono::milliseconds) {});
    CHECK(errc_of([&] { executor.post("/v1/nothing", "{}"); }) == Errc::protocol_violation);
    CHECK(executor.stats().attempts == 1);
  }

  TEST_CASE("unreachable server exhausts retries as backend_unavailable")
  {
    auto endpoint = fast_endpoint("http://127.0.0.1:1");
    endpoint.max_retries = 2;
    endpoint.timeout = std::chrono::milliseconds(300);
    int sleeps = 0;
    RequestExecutor executor(endpoint, make_transport(endpoint, 0, 8), [&](std::chrono::milliseconds) { ++sleeps; });
    CHECK(errc_of([&] { executor.post("/v1/embed", R"({"kind":"text","payload":"x"})"); }) ==
          Errc::backend_unavailable);
    CHECK(executor.stats().attempts == 3);
    CHECK(sleeps == 2);
  }
}

TEST_SUITE("protocol_vectors")
{
  TEST_CASE("checked-in vectors match the current mock")
  {
    const auto file = json::parse(read_file(CAPFORGE_VECTORS_FILE));
    CHECK(file == json(protocol_test_vectors()));
    CHECK(file.at("format") == "capforge-protocol-vectors");
    CHECK(file.at("cases").size() >= 10);
  }

  TEST_CASE("every vector replays through the mock and over HTTP")
  {
    const auto file = json::parse(read_file(CAPFORGE_VECTORS_FILE));
    for (const auto& c : file.at("cases")) {
      const MockBackend mock(c.at("seed").get<std::uint64_t>(), c.at("dim").get<int>());
      const auto path = c.at("path").get<std::string>();
      const auto request = c.at("request").get<std::string>();
      CAPTURE(c.at("name").get<std::string>());
      const auto direct = mock.handle(path, request);
      CHECK(direct.status == c.at("status").get<int>());
      CHECK(direct.body == c.at("response").get<std::string>());

      MockHttpServer server(mock);
      HttpTransport http(server.url(), std::chrono::milliseconds(2000));
      const auto remote = http.post(path, request);
      CHECK(remote.status == direct.status);
      CHECK(remote.body == direct.body);
    }
  }
}
