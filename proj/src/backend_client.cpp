#include "capforge/backend_client.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "capforge/hashing.hpp"
#include "capforge/mock_backend.hpp"

namespace capforge {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

auto validate_endpoint(const BackendEndpoint& endpoint) -> std::vector<std::string>
{
  std::vector<std::string> out;
  if (endpoint.base_url.empty()) out.emplace_back("base_url empty");
  if (endpoint.max_retries < 0) out.emplace_back("max_retries must be >= 0");
  if (!(endpoint.qps_limit > 0.0)) out.emplace_back("qps_limit must be > 0");
  if (endpoint.max_concurrency < 1) out.emplace_back("max_concurrency must be >= 1");
  if (endpoint.burst < 1) out.emplace_back("burst must be >= 1");
  if (endpoint.timeout.count() <= 0) out.emplace_back("timeout must be > 0");
  return out;
}

// -- RateLimiter ------------------------------------------------------------

RateLimiter::RateLimiter(double qps, int burst)
{
  if (!(qps > 0.0) || burst < 1) {
    throw Error(Errc::invalid_argument, "rate limiter needs qps > 0 and burst >= 1");
  }
  interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / qps));
  tolerance_ = interval_ * (burst - 1);
}

void RateLimiter::acquire()
{
  Clock::time_point release;
  {
    std::lock_guard lock(mutex_);
    const auto now = Clock::now();
    next_ = std::max(next_, now);
    release = next_ - tolerance_;
    next_ += interval_;
  }
  if (release > Clock::now()) {
    std::this_thread::sleep_until(release);
  }
}

// -- ConcurrencyGate --------------------------------------------------------

ConcurrencyGate::ConcurrencyGate(int limit) : limit_(limit)
{
  if (limit < 1) {
    throw Error(Errc::invalid_argument, "concurrency limit must be >= 1");
  }
}

void ConcurrencyGate::enter()
{
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [this] { return in_flight_ < limit_; });
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
}

void ConcurrencyGate::leave()
{
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  cv_.notify_one();
}

auto ConcurrencyGate::peak() const -> int
{
  std::lock_guard lock(mutex_);
  return peak_;
}

// -- RequestExecutor --------------------------------------------------------

namespace {

auto checked_endpoint(BackendEndpoint endpoint) -> BackendEndpoint
{
  if (const auto problems = validate_endpoint(endpoint); !problems.empty()) {
    throw Error(Errc::config_error, fmt::format("endpoint {}: {}", endpoint.base_url, problems.front()));
  }
  return endpoint;
}

}  // namespace

RequestExecutor::RequestExecutor(BackendEndpoint endpoint, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : endpoint_(checked_endpoint(std::move(endpoint))),
      transport_(std::move(transport)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      limiter_(endpoint_.qps_limit, endpoint_.burst),
      gate_(endpoint_.max_concurrency)
{
}

auto RequestExecutor::post(std::string_view path, const std::string& body) -> std::string
{
  std::string last_failure;
  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (attempt > 0) {
      ++retries_;
      const auto factor = std::int64_t{1} << std::min(attempt - 1, 30);
      const auto backoff = std::min(endpoint_.initial_backoff * factor, endpoint_.max_backoff);
      sleeper_(backoff);
    }
    limiter_.acquire();
    gate_.enter();
    ++attempts_;
    std::optional<HttpResponse> response;
    try {
      response = transport_->post(path, body);
    } catch (const TransportFailure& e) {
      last_failure = e.what();
    } catch (...) {
      gate_.leave();
      throw;
    }
    gate_.leave();

    if (!response) {
      continue;
    }
    if (response->status == 200) {
      return std::move(response->body);
    }
    if (response->status == 429 || response->status >= 500) {
      last_failure = fmt::format("HTTP {}", response->status);
      continue;
    }
    ++failures_;
    throw Error(Errc::protocol_violation,
                fmt::format("{}{} returned HTTP {}: {}", endpoint_.base_url, path, response->status, response->body));
  }
  ++failures_;
  throw Error(Errc::backend_unavailable,
              fmt::format("{}{} after {} attempts: {}", endpoint_.base_url, path, endpoint_.max_retries + 1, last_failure));
}

auto RequestExecutor::stats() const -> ExecutorStats
{
  return {attempts_.load(), retries_.load(), failures_.load(), gate_.peak()};
}

// -- helpers ----------------------------------------------------------------

auto read_image_bytes(const ImageRef& image) -> std::string
{
  std::ifstream in(image.path, std::ios::binary);
  if (!in) {
    throw Error(Errc::io_error, "cannot read image " + image.path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

namespace {

auto parse_response(const std::string& body) -> json
{
  try {
    auto j = json::parse(body);
    if (!j.is_object()) {
      throw Error(Errc::protocol_violation, "response is not a JSON object");
    }
    return j;
  } catch (const json::parse_error& e) {
    throw Error(Errc::protocol_violation, std::string("malformed JSON response: ") + e.what());
  }
}

void attach_image(json& request, const ImageRef& image, bool send_uri)
{
  if (send_uri) {
    request["image_uri"] = image.path;
  } else {
    request["image_b64"] = base64_encode(read_image_bytes(image));
  }
}

}  // namespace

// -- CaptionerClient --------------------------------------------------------

CaptionerClient::CaptionerClient(std::shared_ptr<RequestExecutor> executor) : executor_(std::move(executor)) {}

auto CaptionerClient::request(const ImageRef& image, const std::string* prompt, int n, SamplingParams sampling,
                              bool allow_empty) -> std::vector<std::string>
{
  if (n < 1) {
    throw Error(Errc::invalid_argument, "n must be >= 1");
  }
  if (image.path.empty()) {
    throw Error(Errc::empty_input, "image reference is empty");
  }
  if (prompt != nullptr && prompt->empty()) {
    throw Error(Errc::empty_input, "question is empty");
  }
  json request;
  attach_image(request, image, executor_->endpoint().send_image_uri);
  if (prompt != nullptr) {
    request["prompt"] = *prompt;
  }
  request["n"] = n;
  request["nucleus_p"] = sampling.nucleus_p;

  const auto response = parse_response(executor_->post("/v1/caption", request.dump()));
  const auto it = response.find("captions");
  if (it == response.end() || !it->is_array()) {
    throw Error(Errc::protocol_violation, "caption response lacks a captions array");
  }
  if (it->size() != static_cast<std::size_t>(n)) {
    throw Error(Errc::protocol_violation, fmt::format("expected {} captions, got {}", n, it->size()));
  }
  std::vector<std::string> out;
  out.reserve(it->size());
  for (const auto& c : *it) {
    if (!c.is_string()) {
      throw Error(Errc::protocol_violation, "caption entry is not a string");
    }
    auto text = c.get<std::string>();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
      if (!allow_empty) {
        throw Error(Errc::protocol_violation, "empty caption in response");
      }
      text.clear();
    }
    out.push_back(std::move(text));
  }
  return out;
}

auto CaptionerClient::caption_image(const ImageRef& image, int n, SamplingParams sampling) -> std::vector<std::string>
{
  return request(image, nullptr, n, sampling, false);
}

auto CaptionerClient::qa(const ImageRef& image, const std::string& question, int n, SamplingParams sampling)
    -> std::vector<std::string>
{
  return request(image, &question, n, sampling, false);
}

auto CaptionerClient::qa(const ImageRef& image, const std::string& question, SamplingParams sampling) -> std::string
{
  return request(image, &question, 1, sampling, true).front();
}

// -- EmbedderClient ---------------------------------------------------------

EmbedderClient::EmbedderClient(std::shared_ptr<RequestExecutor> executor, int expected_dim)
    : executor_(std::move(executor)), expected_dim_(expected_dim)
{
}

auto EmbedderClient::embed(std::string_view kind, const std::string& payload) -> EmbeddingVector
{
  const json request{{"kind", kind}, {"payload", payload}};
  const auto response = parse_response(executor_->post("/v1/embed", request.dump()));
  const auto vec = response.find("vector");
  const auto dim = response.find("dim");
  if (vec == response.end() || !vec->is_array() || dim == response.end() || !dim->is_number_integer()) {
    throw Error(Errc::protocol_violation, "embed response lacks vector/dim");
  }
  EmbeddingVector out;
  out.values.reserve(vec->size());
  for (const auto& v : *vec) {
    if (!v.is_number()) {
      throw Error(Errc::protocol_violation, "embedding component is not a number");
    }
    out.values.push_back(v.get<double>());
  }
  if (static_cast<std::int64_t>(out.values.size()) != dim->get<std::int64_t>()) {
    throw Error(Errc::protocol_violation, "embedding length disagrees with dim");
  }
  if (expected_dim_ > 0 && static_cast<int>(out.values.size()) != expected_dim_) {
    throw Error(Errc::dim_mismatch, fmt::format("expected dim {}, got {}", expected_dim_, out.values.size()));
  }
  return out;
}

auto EmbedderClient::embed_text(const std::string& text) -> EmbeddingVector
{
  if (text.empty()) {
    throw Error(Errc::empty_input, "text to embed is empty");
  }
  return embed("text", text);
}

auto EmbedderClient::embed_image(const ImageRef& image) -> EmbeddingVector
{
  if (image.path.empty()) {
    throw Error(Errc::empty_input, "image reference is empty");
  }
  const auto bytes = read_image_bytes(image);
  if (bytes.empty()) {
    throw Error(Errc::empty_input, "image file is empty: " + image.path);
  }
  return embed("image", base64_encode(bytes));
}

// -- SummarizerClient -------------------------------------------------------

SummarizerClient::SummarizerClient(std::shared_ptr<RequestExecutor> executor, std::shared_ptr<const TokenCounter> counter)
    : executor_(std::move(executor)), counter_(std::move(counter))
{
}

auto SummarizerClient::summarize(const std::string& prompt) -> SummaryResponse
{
  if (prompt.empty()) {
    throw Error(Errc::empty_input, "summary prompt is empty");
  }
  const json request{{"prompt", prompt}};
  const auto raw = executor_->post("/v1/summarize", request.dump());
  const auto response = parse_response(raw);
  if (response.contains("refusal")) {
    throw SummarizerRefused(raw);
  }
  const auto text = response.find("text");
  if (text == response.end() || !text->is_string() || text->get<std::string>().empty()) {
    throw Error(Errc::protocol_violation, "summarize response lacks text");
  }
  SummaryResponse out;
  out.text = text->get<std::string>();
  if (const auto usage = response.find("usage"); usage != response.end() && usage->is_object()) {
    out.usage.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
    out.usage.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
  }
  if (out.usage.prompt_tokens <= 0) {
    out.usage.prompt_tokens = counter_->count(prompt);
  }
  if (out.usage.completion_tokens <= 0) {
    out.usage.completion_tokens = counter_->count(out.text);
  }
  return out;
}

// -- factories --------------------------------------------------------------

auto make_transport(const BackendEndpoint& endpoint, std::uint64_t seed, int dim) -> std::shared_ptr<Transport>
{
  if (endpoint.base_url.rfind("mock://", 0) == 0) {
    return std::make_shared<MockTransport>(MockBackend(seed, dim));
  }
  return std::make_shared<HttpTransport>(endpoint.base_url, endpoint.timeout, endpoint.api_key);
}

auto make_mock_backends(std::uint64_t seed, int dim) -> Backends
{
  BackendEndpoint endpoint;
  endpoint.base_url = "mock://";
  endpoint.qps_limit = 1e9;
  endpoint.max_concurrency = 64;
  auto executor = [&] {
    return std::make_shared<RequestExecutor>(endpoint, make_transport(endpoint, seed, dim));
  };
  return {std::make_shared<CaptionerClient>(executor()), std::make_shared<EmbedderClient>(executor(), dim),
          std::make_shared<SummarizerClient>(executor())};
}

}  // namespace capforge
