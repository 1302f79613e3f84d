#include <doctest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "capforge/backend_client.hpp"
#include "capforge/hashing.hpp"
#include "capforge/mock_backend.hpp"
#include "test_support.hpp"

using namespace capforge;
using namespace std::chrono_literals;
using capforge::testing::errc_of;
using capforge::testing::FailingTransport;
using capforge::testing::ScriptedTransport;
using capforge::testing::TempDir;
using nlohmann::json;

namespace {

auto fast_endpoint() -> BackendEndpoint
{
  BackendEndpoint e;
  e.base_url = "test://";
  e.qps_limit = 1e6;
  e.max_concurrency = 16;
  e.initial_backoff = 1ms;
  e.max_backoff = 4ms;
  return e;
}

struct SleepLog {
  std::vector<std::chrono::milliseconds> sleeps;
  auto sleeper()
  {
    return [this](std::chrono::milliseconds d) { sleeps.push_back(d); };
  }
};

auto image_file(const TempDir& dir, const std::string& name, const std::string& bytes) -> ImageRef
{
  capforge::testing::write_text(dir / name, bytes);
  return {(dir / name).string()};
}

}  // namespace

TEST_SUITE("mock_backend")
{
  TEST_CASE("caption follows the published hash rule")
  {
    const MockBackend mock(0, 8);
    const auto r = mock.handle("/v1/caption", json{{"image_uri", "a"}, {"n", 5}, {"nucleus_p", 0.9}}.dump());
    REQUIRE(r.status == 200);
    const auto captions = json::parse(r.body).at("captions");
    REQUIRE(captions.size() == 5);

    // Independent recomputation of sample 0.
    std::uint64_t h = fnv1a64("0");
    for (std::string_view f : {"caption", "a", "", "0"}) {
      h = fnv1a64(f, fnv1a64("\x1f", h));
    }
    const std::array<std::string, 8> colors{"red", "blue", "green", "white", "black", "brown", "gray", "yellow"};
    const auto first = captions[0].get<std::string>();
    CHECK(first.rfind("a " + colors[h % 8] + " ", 0) == 0);

    CHECK(mock.handle("/v1/caption", json{{"image_uri", "a"}, {"n", 5}, {"nucleus_p", 0.9}}.dump()).body == r.body);
  }

  TEST_CASE("responses are compact with sorted keys")
  {
    const MockBackend mock(1, 2);
    const auto r = mock.handle("/v1/embed", json{{"kind", "text"}, {"payload", "x"}}.dump());
    CHECK(r.body.rfind("{\"dim\":2,\"vector\":[", 0) == 0);
    CHECK(r.body.find(' ') == std::string::npos);
  }

  TEST_CASE("different seeds give different outputs")
  {
    const auto body = json{{"kind", "text"}, {"payload", "x"}}.dump();
    CHECK(MockBackend(1, 8).handle("/v1/embed", body).body != MockBackend(2, 8).handle("/v1/embed", body).body);
  }

  TEST_CASE("embeddings are unit length")
  {
    const MockBackend mock(5, 32);
    for (const auto* payload : {"x", "a longer caption", "\xe2\x98\x95"}) {
      const auto v = json::parse(mock.handle("/v1/embed", json{{"kind", "text"}, {"payload", payload}}.dump()).body)
                         .at("vector")
                         .get<std::vector<double>>();
      double n2 = 0;
      for (double x : v) {
        n2 += x * x;
      }
      CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("summarize echoes the first quoted caption")
  {
    CHECK(mock_extract_first_caption("descriptions: 'toy bomb, toy bomb'. end") == "toy bomb");
    CHECK(mock_extract_first_caption("descriptions: 'one only'. end") == "one only");
    CHECK(mock_extract_first_caption("  no quote  ") == "no quote");
  }

  TEST_CASE("malformed requests get 400 and unknown paths 404")
  {
    const MockBackend mock(0, 4);
    CHECK(mock.handle("/v1/caption", "{not json").status == 400);
    CHECK(mock.handle("/v1/caption", json{{"n", 1}}.dump()).status == 400);
    CHECK(mock.handle("/v1/caption", json{{"image_uri", "a"}, {"n", 0}}.dump()).status == 400);
    CHECK(mock.handle("/v1/embed", json{{"kind", "audio"}, {"payload", "a"}}.dump()).status == 400);
    CHECK(mock.handle("/v1/summarize", json{{"prompt", ""}}.dump()).status == 400);
    CHECK(mock.handle("/v2/other", "{}").status == 404);
  }
}

TEST_SUITE("backend_client")
{
  TEST_CASE("caption_image returns n deterministic captions")
  {
    TempDir dir;
    const auto image = image_file(dir, "a.png", "a");
    auto backends = make_mock_backends(0, 16);
    const auto five = backends.captioner->caption_image(image, 5, {});
    CHECK(five.size() == 5);
    CHECK(backends.captioner->caption_image(image, 5, {}) == five);
    CHECK(backends.captioner->caption_image(image, 1, {}).size() == 1);
    for (const auto& c : five) {
      CHECK_FALSE(c.empty());
    }
    CHECK(errc_of([&] { backends.captioner->caption_image(image, 0, {}); }) == Errc::invalid_argument);
    CHECK(errc_of([&] { backends.captioner->caption_image({dir.path().string() + "/missing.png"}, 1, {}); }) ==
          Errc::io_error);
  }

  TEST_CASE("qa answers depend on image and question")
  {
    TempDir dir;
    const auto image = image_file(dir, "a.png", "a");
    const auto other = image_file(dir, "b.png", "b");
    auto backends = make_mock_backends(0, 16);
    const auto q = std::string(kDefaultQaPrompt1);
    CHECK(backends.captioner->qa(image, q, {}) == backends.captioner->qa(image, q, {}));
    const auto stage2 = backends.captioner->qa(image, "what is the structure and geometry of this chair?", 5, {});
    CHECK(stage2.size() == 5);
    bool differs = false;
    for (int i = 0; i < 4; ++i) {
      differs = differs || backends.captioner->qa(other, q + std::to_string(i), {}) != backends.captioner->qa(image, q, {});
    }
    CHECK(differs);
    CHECK(errc_of([&] { backends.captioner->qa(image, "", {}); }) == Errc::empty_input);
    CHECK(errc_of([&] { backends.captioner->qa(image, "", 5, {}); }) == Errc::empty_input);
  }

  TEST_CASE("embedder determinism, dimension and empty input")
  {
    auto backends = make_mock_backends(0, 16);
    const auto a = backends.embedder->embed_text("x");
    CHECK(a.dim() == 16);
    CHECK(backends.embedder->embed_text("x") == a);

    auto transport = std::make_shared<ScriptedTransport>(std::deque<ScriptedTransport::Step>{});
    auto exec = std::make_shared<RequestExecutor>(fast_endpoint(), transport);
    EmbedderClient client(exec, 8);
    CHECK(errc_of([&] { client.embed_text(""); }) == Errc::empty_input);
    CHECK(transport->calls() == 0);

    EmbedderClient wrong_dim(exec, 12);
    CHECK(errc_of([&] { wrong_dim.embed_text("x"); }) == Errc::dim_mismatch);
  }

  TEST_CASE("summarizer reports usage from the backend")
  {
    auto backends = make_mock_backends(0, 16);
    const std::string prompt = "The descriptions are as follows: 'a red chair, a chair'. The caption should be:";
    const auto r = backends.summarizer->summarize(prompt);
    CHECK(r.text == "a red chair");
    CHECK(r.usage.prompt_tokens == count_tokens(prompt));
    CHECK(r.usage.completion_tokens == count_tokens("a red chair"));
    CHECK(errc_of([&] { backends.summarizer->summarize(""); }) == Errc::empty_input);
  }

  TEST_CASE("missing usage falls back to the token counter")
  {
    auto transport = std::make_shared<ScriptedTransport>(
        std::deque<ScriptedTransport::Step>{{HttpResponse{200, R"({"text":"a chair"})"}}});
    SummarizerClient client(std::make_shared<RequestExecutor>(fast_endpoint(), transport),
                            std::make_shared<WhitespaceTokenCounter>());
    const auto r = client.summarize("one two three");
    CHECK(r.usage.prompt_tokens == 3);
    CHECK(r.usage.completion_tokens == 2);
  }

  TEST_CASE("refusal raises SummarizerRefused with the raw payload")
  {
    const std::string payload = R"({"refusal":"content policy"})";
    auto transport =
        std::make_shared<ScriptedTransport>(std::deque<ScriptedTransport::Step>{{HttpResponse{200, payload}}});
    SummarizerClient client(std::make_shared<RequestExecutor>(fast_endpoint(), transport));
    try {
      client.summarize("prompt");
      FAIL("expected a refusal");
    } catch (const SummarizerRefused& e) {
      CHECK(e.code() == Errc::summarizer_refused);
      CHECK(e.raw_payload() == payload);
    }
  }

  TEST_CASE("429 then success retries exactly once")
  {
    SleepLog log;
    auto transport =
        std::make_shared<ScriptedTransport>(std::deque<ScriptedTransport::Step>{{HttpResponse{429, "slow down"}}});
    auto exec = std::make_shared<RequestExecutor>(fast_endpoint(), transport, log.sleeper());
    EmbedderClient client(exec, 8);
    CHECK(client.embed_text("x").dim() == 8);
    CHECK(exec->stats().retries == 1);
    CHECK(exec->stats().attempts == 2);
    CHECK(exec->stats().failures == 0);
    CHECK(log.sleeps == std::vector<std::chrono::milliseconds>{1ms});
  }

  TEST_CASE("unreachable endpoint exhausts retries with capped exponential backoff")
  {
    SleepLog log;
    auto endpoint = fast_endpoint();
    endpoint.max_retries = 4;
    auto transport = std::make_shared<FailingTransport>();
    RequestExecutor exec(endpoint, transport, log.sleeper());
    CHECK(errc_of([&] { exec.post("/v1/embed", "{}"); }) == Errc::backend_unavailable);
    CHECK(transport->calls == 5);
    CHECK(exec.stats().retries == 4);
    CHECK(exec.stats().failures == 1);
    CHECK(log.sleeps == std::vector<std::chrono::milliseconds>{1ms, 2ms, 4ms, 4ms});
  }

  TEST_CASE("property: retries equal min(failures, max_retries)")
  {
    for (int max_retries = 0; max_retries <= 3; ++max_retries) {
      for (int failures = 0; failures <= 5; ++failures) {
        std::deque<ScriptedTransport::Step> script;
        for (int i = 0; i < failures; ++i) {
          script.push_back(i % 2 == 0 ? ScriptedTransport::Step{} : ScriptedTransport::Step{HttpResponse{503, ""}});
        }
        auto endpoint = fast_endpoint();
        endpoint.max_retries = max_retries;
        RequestExecutor exec(endpoint, std::make_shared<ScriptedTransport>(script), [](auto) {});
        const bool ok = failures <= max_retries;
        if (ok) {
          CHECK_NOTHROW(exec.post("/v1/embed", R"({"kind":"text","payload":"x"})"));
        } else {
          CHECK(errc_of([&] { exec.post("/v1/embed", R"({"kind":"text","payload":"x"})"); }) ==
                Errc::backend_unavailable);
        }
        CHECK(exec.stats().retries == std::min(failures, max_retries));
      }
    }
  }

  TEST_CASE("client errors are protocol violations and not retried")
  {
    auto transport = std::make_shared<FailingTransport>(HttpResponse{400, "bad"});
    RequestExecutor exec(fast_endpoint(), transport, [](auto) {});
    CHECK(errc_of([&] { exec.post("/v1/caption", "{}"); }) == Errc::protocol_violation);
    CHECK(transport->calls == 1);
  }

  TEST_CASE("malformed and short responses are protocol violations")
  {
    TempDir dir;
    const auto image = image_file(dir, "a.png", "a");
    auto make = [](std::string body) {
      auto t = std::make_shared<ScriptedTransport>(std::deque<ScriptedTransport::Step>{{HttpResponse{200, body}}});
      return std::make_shared<RequestExecutor>(fast_endpoint(), t);
    };
    CHECK(errc_of([&] { CaptionerClient(make("not json")).caption_image(image, 1, {}); }) == Errc::protocol_violation);
    CHECK(errc_of([&] { CaptionerClient(make(R"({"captions":["a"]})")).caption_image(image, 2, {}); }) ==
          Errc::protocol_violation);
    CHECK(errc_of([&] { CaptionerClient(make(R"({"captions":[" "]})")).caption_image(image, 1, {}); }) ==
          Errc::protocol_violation);
    CHECK(CaptionerClient(make(R"({"captions":[" "]})")).qa(image, "q", {}).empty());
    CHECK(errc_of([&] { EmbedderClient(make(R"({"vector":[1,2],"dim":3})"), 0).embed_text("x"); }) ==
          Errc::protocol_violation);
    CHECK(errc_of([&] { SummarizerClient(make(R"({"usage":{}})")).summarize("x"); }) == Errc::protocol_violation);
  }

  TEST_CASE("image bytes are sent inline unless the endpoint asks for URIs")
  {
    TempDir dir;
    const auto image = image_file(dir, "a.png", "pixels");
    struct Capture final : Transport {
      std::string body;
      auto post(std::string_view path, const std::string& b) -> HttpResponse override
      {
        body = b;
        return MockBackend(0, 4).handle(path, b);
      }
    };
    auto capture = std::make_shared<Capture>();
    auto endpoint = fast_endpoint();
    CaptionerClient(std::make_shared<RequestExecutor>(endpoint, capture)).caption_image(image, 1, {0.9});
    auto sent = json::parse(capture->body);
    CHECK(sent.at("image_b64") == base64_encode("pixels"));
    CHECK(sent.at("n") == 1);
    CHECK(sent.at("nucleus_p") == 0.9);
    CHECK_FALSE(sent.contains("prompt"));

    endpoint.send_image_uri = true;
    CaptionerClient(std::make_shared<RequestExecutor>(endpoint, capture)).qa(image, "q?", {0.9});
    sent = json::parse(capture->body);
    CHECK(sent.at("image_uri") == image.path);
    CHECK(sent.at("prompt") == "q?");
  }

  TEST_CASE("endpoint validation")
  {
    BackendEndpoint e;
    CHECK(validate_endpoint(e) == std::vector<std::string>{"base_url empty"});
    e.base_url = "http://x";
    e.qps_limit = 0;
    e.max_concurrency = 0;
    CHECK(validate_endpoint(e).size() == 2);
    CHECK(errc_of([&] { RequestExecutor(e, std::make_shared<FailingTransport>()); }) == Errc::config_error);
  }
}

TEST_SUITE("rate_limit")
{
  TEST_CASE("rate limiter spaces requests at the configured qps")
  {
    RateLimiter limiter(50.0, 1);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 11; ++i) {
      limiter.acquire();
    }
    const auto elapsed = std::chrono::steady_clock::now() - start;
    // 10 intervals of 20 ms after the first immediate grant.
    CHECK(elapsed >= 195ms);
  }

  TEST_CASE("burst allowance admits back-to-back requests")
  {
    RateLimiter limiter(10.0, 4);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 4; ++i) {
      limiter.acquire();
    }
    CHECK(std::chrono::steady_clock::now() - start < 50ms);
  }

  TEST_CASE("property: issued rate stays within qps plus one burst under concurrency")
  {
    const double qps = 200.0;
    const int burst = 3;
    RateLimiter limiter(qps, burst);
    std::mutex m;
    std::vector<std::chrono::steady_clock::time_point> grants;
    {
      std::vector<std::jthread> threads;
      for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&] {
          for (int i = 0; i < 15; ++i) {
            limiter.acquire();
            std::lock_guard lock(m);
            grants.push_back(std::chrono::steady_clock::now());
          }
        });
      }
    }
    std::sort(grants.begin(), grants.end());
    // Any window [t, t + w] holds at most qps * w + burst grants.
    for (std::size_t i = 0; i < grants.size(); ++i) {
      for (std::size_t j = i; j < grants.size(); ++j) {
        const double w = std::chrono::duration<double>(grants[j] - grants[i]).count();
        CHECK(static_cast<double>(j - i + 1) <= qps * w + burst + 1e-9);
      }
    }
  }

  TEST_CASE("concurrency gate bounds in-flight requests")
  {
    struct Slow final : Transport {
      std::atomic<int> in_flight{0};
      std::atomic<int> peak{0};
      auto post(std::string_view path, const std::string& body) -> HttpResponse override
      {
        const int now = ++in_flight;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(5ms);
        --in_flight;
        return MockBackend(0, 4).handle(path, body);
      }
    };
    auto slow = std::make_shared<Slow>();
    auto endpoint = fast_endpoint();
    endpoint.max_concurrency = 3;
    auto exec = std::make_shared<RequestExecutor>(endpoint, slow);
    EmbedderClient client(exec, 4);
    {
      std::vector<std::jthread> threads;
      for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
          for (int i = 0; i < 5; ++i) {
            client.embed_text(fmt::format("{}-{}", t, i));
          }
        });
      }
    }
    CHECK(slow->peak.load() <= 3);
    CHECK(exec->stats().peak_in_flight <= 3);
    CHECK(exec->stats().attempts == 40);
  }
}
