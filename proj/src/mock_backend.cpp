#include "capforge/mock_backend.hpp"

#include <array>
#include <cmath>

#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/hashing.hpp"
#include "capforge/tokenizer.hpp"

namespace capforge {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 8> kColors{"red", "blue", "green", "white", "black", "brown", "gray", "yellow"};
constexpr std::array<std::string_view, 8> kMaterials{"wooden", "metal", "plastic", "stone", "glass", "ceramic", "leather", "fabric"};
constexpr std::array<std::string_view, 16> kNouns{"chair", "table", "lamp", "car", "house", "tree", "robot", "sword",
                                                   "vase", "boat", "shoe", "guitar", "bottle", "helmet", "bench", "clock"};
constexpr std::array<std::string_view, 8> kDetails{"with four legs", "on a flat base", "with a curved handle",
                                                    "with round wheels", "with a tall spire", "with carved patterns",
                                                    "with a hollow center", "with sharp edges"};

auto mock_key(std::uint64_t seed, std::initializer_list<std::string_view> fields) -> std::uint64_t
{
  std::uint64_t h = fnv1a64(std::to_string(seed));
  for (const auto field : fields) {
    h = fnv1a64("\x1f", h);
    h = fnv1a64(field, h);
  }
  return h;
}

auto bad_request(std::string_view message) -> HttpResponse
{
  return {400, json{{"error", message}}.dump()};
}

auto trim(std::string_view s) -> std::string_view
{
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

auto mock_extract_first_caption(std::string_view prompt) -> std::string
{
  const auto quote = prompt.find('\'');
  if (quote == std::string_view::npos) {
    return std::string(trim(prompt));
  }
  const auto rest = prompt.substr(quote + 1);
  const auto end = std::min(rest.find(", "), rest.find('\''));
  return std::string(trim(rest.substr(0, end)));
}

MockBackend::MockBackend(std::uint64_t seed, int dim) : seed_(seed), dim_(dim)
{
  if (dim < 1) {
    throw Error(Errc::invalid_argument, "mock embedding dim must be >= 1");
  }
}

auto MockBackend::handle(std::string_view path, const std::string& body) const -> HttpResponse
{
  try {
    if (path == "/v1/caption") return caption(body);
    if (path == "/v1/embed") return embed(body);
    if (path == "/v1/summarize") return summarize(body);
  } catch (const json::exception& e) {
    return bad_request(e.what());
  } catch (const Error& e) {
    return bad_request(e.what());
  }
  return {404, json{{"error", "unknown path"}}.dump()};
}

auto MockBackend::caption(const std::string& body) const -> HttpResponse
{
  const auto request = json::parse(body);
  std::string image;
  if (request.contains("image_b64")) {
    image = base64_decode(request.at("image_b64").get<std::string>());
  } else if (request.contains("image_uri")) {
    image = request.at("image_uri").get<std::string>();
  } else {
    return bad_request("missing image_b64 or image_uri");
  }
  const std::string prompt = request.value("prompt", std::string{});
  const int n = request.value("n", 1);
  if (n < 1) {
    return bad_request("n must be >= 1");
  }
  auto captions = json::array();
  for (int i = 0; i < n; ++i) {
    const auto h = mock_key(seed_, {"caption", image, prompt, std::to_string(i)});
    std::string text = prompt.empty() ? "a " : "";
    text += kColors[h % 8];
    text += ' ';
    text += kMaterials[(h >> 8) % 8];
    text += ' ';
    text += kNouns[(h >> 16) % 16];
    text += ' ';
    text += kDetails[(h >> 24) % 8];
    captions.push_back(std::move(text));
  }
  return {200, json{{"captions", std::move(captions)}}.dump()};
}

auto MockBackend::embed(const std::string& body) const -> HttpResponse
{
  const auto request = json::parse(body);
  const auto kind = request.at("kind").get<std::string>();
  auto payload = request.at("payload").get<std::string>();
  if (kind == "image") {
    payload = base64_decode(payload);
  } else if (kind != "text") {
    return bad_request("kind must be text or image");
  }
  if (payload.empty()) {
    return bad_request("empty payload");
  }
  std::uint64_t state = mock_key(seed_, {"embed", kind, payload});
  std::vector<double> values(static_cast<std::size_t>(dim_));
  double norm2 = 0.0;
  for (auto& v : values) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    v = 2.0 * u - 1.0;
    norm2 += v * v;
  }
  const double norm = std::sqrt(norm2);
  if (norm > 0.0) {
    for (auto& v : values) {
      v /= norm;
    }
  }
  return {200, json{{"vector", values}, {"dim", dim_}}.dump()};
}

auto MockBackend::summarize(const std::string& body) const -> HttpResponse
{
  const auto request = json::parse(body);
  const auto prompt = request.at("prompt").get<std::string>();
  if (prompt.empty()) {
    return bad_request("empty prompt");
  }
  const auto text = mock_extract_first_caption(prompt);
  json usage{{"prompt_tokens", count_tokens(prompt)}, {"completion_tokens", count_tokens(text)}};
  return {200, json{{"text", text}, {"usage", std::move(usage)}}.dump()};
}

}  // namespace capforge
