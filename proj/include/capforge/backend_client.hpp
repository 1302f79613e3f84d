#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capforge/errors.hpp"
#include "capforge/tokenizer.hpp"
#include "capforge/transport.hpp"

namespace capforge {

struct BackendEndpoint {
  std::string base_url;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  double qps_limit = 10.0;
  int max_concurrency = 4;
  /// Requests admitted back-to-back before the qps spacing applies.
  int burst = 1;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::milliseconds max_backoff{10000};
  /// Send image paths as `image_uri` instead of inlining bytes as `image_b64`.
  bool send_image_uri = false;
  std::optional<std::string> api_key;
};

/// Violations of the endpoint invariants; empty when valid.
auto validate_endpoint(const BackendEndpoint& endpoint) -> std::vector<std::string>;

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  auto operator+=(const TokenUsage& other) -> TokenUsage&
  {
    prompt_tokens += other.prompt_tokens;
    completion_tokens += other.completion_tokens;
    return *this;
  }
  friend auto operator==(const TokenUsage&, const TokenUsage&) -> bool = default;
};

struct EmbeddingVector {
  std::vector<double> values;

  [[nodiscard]] auto dim() const noexcept -> std::size_t { return values.size(); }
  [[nodiscard]] auto view() const noexcept -> std::span<const double> { return values; }
  friend auto operator==(const EmbeddingVector&, const EmbeddingVector&) -> bool = default;
};

/// A rendered view on local disk.
struct ImageRef {
  std::string path;
};

struct SamplingParams {
  double nucleus_p = 0.9;
};

struct SummaryResponse {
  std::string text;
  TokenUsage usage;
};

/// Carries the raw refusal payload alongside Errc::summarizer_refused.
class SummarizerRefused : public Error {
 public:
  explicit SummarizerRefused(std::string raw_payload)
      : Error(Errc::summarizer_refused, "summarizer declined the request"), raw_payload_(std::move(raw_payload))
  {
  }
  [[nodiscard]] auto raw_payload() const noexcept -> const std::string& { return raw_payload_; }

 private:
  std::string raw_payload_;
};

/// Generic cell-rate limiter: at most `qps` acquisitions per second with a
/// burst allowance of `burst` back-to-back acquisitions.
class RateLimiter {
 public:
  RateLimiter(double qps, int burst);
  void acquire();

 private:
  std::mutex mutex_;
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::duration tolerance_;
  std::chrono::steady_clock::time_point next_{};
};

/// Bounds the number of in-flight requests.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int limit);
  void enter();
  void leave();
  [[nodiscard]] auto peak() const -> int;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  int limit_;
  int in_flight_ = 0;
  int peak_ = 0;
};

struct ExecutorStats {
  std::int64_t attempts = 0;
  std::int64_t retries = 0;
  std::int64_t failures = 0;
  int peak_in_flight = 0;
};

/// Shared request machinery: concurrency gate, rate limiter and retry with
/// exponential backoff. Retries on transport failure, 429 and 5xx; any other
/// non-200 status is a protocol violation and is not retried. All protocol
/// requests are idempotent.
class RequestExecutor {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RequestExecutor(BackendEndpoint endpoint, std::shared_ptr<Transport> transport, Sleeper sleeper = {});

  /// Returns the body of a 200 response.
  auto post(std::string_view path, const std::string& body) -> std::string;

  [[nodiscard]] auto stats() const -> ExecutorStats;
  [[nodiscard]] auto endpoint() const noexcept -> const BackendEndpoint& { return endpoint_; }

 private:
  BackendEndpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  RateLimiter limiter_;
  ConcurrencyGate gate_;
  std::atomic<std::int64_t> attempts_{0};
  std::atomic<std::int64_t> retries_{0};
  std::atomic<std::int64_t> failures_{0};
};

class CaptionerClient {
 public:
  explicit CaptionerClient(std::shared_ptr<RequestExecutor> executor);

  /// Exactly n non-empty captions for one image.
  auto caption_image(const ImageRef& image, int n, SamplingParams sampling) -> std::vector<std::string>;
  /// Visual question answering: n answers to `question` about the image.
  auto qa(const ImageRef& image, const std::string& question, int n, SamplingParams sampling)
      -> std::vector<std::string>;
  /// Single-answer variant. May return an empty answer; callers decide.
  auto qa(const ImageRef& image, const std::string& question, SamplingParams sampling) -> std::string;

  [[nodiscard]] auto executor() const -> RequestExecutor& { return *executor_; }

 private:
  auto request(const ImageRef& image, const std::string* prompt, int n, SamplingParams sampling, bool allow_empty)
      -> std::vector<std::string>;

  std::shared_ptr<RequestExecutor> executor_;
};

class EmbedderClient {
 public:
  /// `expected_dim` of 0 accepts whatever dimension the backend reports.
  EmbedderClient(std::shared_ptr<RequestExecutor> executor, int expected_dim);

  auto embed_text(const std::string& text) -> EmbeddingVector;
  auto embed_image(const ImageRef& image) -> EmbeddingVector;

  [[nodiscard]] auto executor() const -> RequestExecutor& { return *executor_; }

 private:
  auto embed(std::string_view kind, const std::string& payload) -> EmbeddingVector;

  std::shared_ptr<RequestExecutor> executor_;
  int expected_dim_;
};

class SummarizerClient {
 public:
  SummarizerClient(std::shared_ptr<RequestExecutor> executor,
                   std::shared_ptr<const TokenCounter> counter = std::make_shared<CharApproxTokenCounter>());

  /// Throws SummarizerRefused when the service declines the prompt.
  auto summarize(const std::string& prompt) -> SummaryResponse;

  [[nodiscard]] auto executor() const -> RequestExecutor& { return *executor_; }

 private:
  std::shared_ptr<RequestExecutor> executor_;
  std::shared_ptr<const TokenCounter> counter_;
};

struct Backends {
  std::shared_ptr<CaptionerClient> captioner;
  std::shared_ptr<EmbedderClient> embedder;
  std::shared_ptr<SummarizerClient> summarizer;
};

/// Transport for an endpoint: "mock://" URLs resolve to an in-process
/// MockBackend(seed, dim); anything else goes over HTTP.
auto make_transport(const BackendEndpoint& endpoint, std::uint64_t seed, int dim) -> std::shared_ptr<Transport>;

/// Three clients sharing nothing but the mock rules.
auto make_mock_backends(std::uint64_t seed, int dim) -> Backends;

/// Reads an image file for transmission. Throws Error(io_error).
auto read_image_bytes(const ImageRef& image) -> std::string;

}  // namespace capforge
