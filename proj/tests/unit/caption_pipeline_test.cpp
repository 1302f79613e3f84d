#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "capforge/caption_pipeline.hpp"
#include "test_support.hpp"

using namespace capforge;
using capforge::testing::errc_of;
using capforge::testing::random_vector;
using capforge::testing::ScriptedTransport;
using capforge::testing::TempDir;

namespace {

auto candidates(std::size_t n) -> std::vector<CandidateCaption>
{
  std::vector<CandidateCaption> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({fmt::format("caption {}", i), 0, static_cast<int>(i)});
  }
  return out;
}

// Exhaustive oracle: dot products and norms computed directly, strict
// improvement required to move off an earlier index.
auto oracle_argmax(const std::vector<double>& img, const std::vector<std::vector<double>>& texts) -> std::size_t
{
  std::size_t best = 0;
  double best_score = -2;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t d = 0; d < img.size(); ++d) {
      dot += static_cast<long double>(img[d]) * texts[i][d];
      na += static_cast<long double>(img[d]) * img[d];
      nb += static_cast<long double>(texts[i][d]) * texts[i][d];
    }
    const auto s = static_cast<double>(dot / std::sqrt(na * nb));
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("caption_pipeline")
{
  TEST_CASE("cosine similarity examples")
  {
    const std::vector<double> v{0.3, -1.2, 4.0};
    CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
    CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
    CHECK(cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{2, 1}) == doctest::Approx(0.8));
    CHECK(errc_of([] { cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{1}); }) == Errc::dim_mismatch);
    CHECK(errc_of([] { cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 1}); }) ==
          Errc::zero_vector);
  }

  TEST_CASE("property: cosine stays within [-1, 1]")
  {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
      const auto a = random_vector(rng, 1 + rng() % 16);
      const auto b = random_vector(rng, a.size());
      const double c = cosine_similarity(a, b);
      CHECK(c >= -1.0);
      CHECK(c <= 1.0);
      CHECK(cosine_similarity(a, a) <= 1.0);
    }
  }

  TEST_CASE("selection picks the highest cosine")
  {
    const EmbeddingVector image{{1.0, 0.0}};
    // cos = 0.3 and 0.7 by construction.
    const std::vector<EmbeddingVector> texts{{{0.3, std::sqrt(1 - 0.09)}}, {{0.7, std::sqrt(1 - 0.49)}}};
    const auto r = select_caption(candidates(2), image, texts);
    CHECK(r.chosen_sample_index == 1);
    CHECK(r.chosen.cosine_score == doctest::Approx(0.7));
    CHECK(r.chosen.text == "caption 1");
    REQUIRE(r.rejected.size() == 1);
    CHECK(r.rejected[0].second == doctest::Approx(0.3));
  }

  TEST_CASE("identical candidates select the first")
  {
    const EmbeddingVector image{{0.2, 0.4, 0.1}};
    const std::vector<EmbeddingVector> texts(4, EmbeddingVector{{1.0, 1.0, 1.0}});
    CHECK(select_caption(candidates(4), image, texts).chosen_sample_index == 0);
  }

  TEST_CASE("selection input errors")
  {
    const EmbeddingVector image{{1.0, 0.0}};
    CHECK(errc_of([&] { select_caption({}, image, {}); }) == Errc::no_candidates);
    CHECK(errc_of([&] { select_caption(candidates(2), image, {EmbeddingVector{{1.0, 0.0}}}); }) ==
          Errc::invalid_argument);
    CHECK(errc_of([&] { select_caption(candidates(1), image, {EmbeddingVector{{1.0, 0.0, 0.0}}}); }) ==
          Errc::dim_mismatch);
  }

  TEST_CASE("property: selection matches an exhaustive scan")
  {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t n = 1 + rng() % 8;
      const std::size_t dim = 1 + rng() % 32;
      const auto img = random_vector(rng, dim);
      std::vector<std::vector<double>> raw;
      std::vector<EmbeddingVector> texts;
      for (std::size_t i = 0; i < n; ++i) {
        raw.push_back(random_vector(rng, dim));
        if (i > 0 && rng() % 4 == 0) {
          raw.back() = raw[rng() % i];
        }
        texts.push_back({raw.back()});
      }
      const auto r = select_caption(candidates(n), {img}, texts);
      CHECK(static_cast<std::size_t>(r.chosen_sample_index) == oracle_argmax(img, raw));
    }
  }

  TEST_CASE("summary prompt golden")
  {
    CHECK(build_summary_prompt({"a red chair"}, kDefaultSummaryPrompt) ==
          "Given a set of descriptions about the same 3D object, distill these descriptions into one concise "
          "caption. The descriptions are as follows: 'a red chair'. Avoid describing background, surface, and "
          "posture. The caption should be:");
    CHECK(build_summary_prompt({"a", "b"}, "{captions}") == "a, b");
    CHECK(build_summary_prompt({"x"}, "{captions}|{captions}") == "x|x");
    CHECK(errc_of([] { build_summary_prompt({"a"}, "no placeholder"); }) == Errc::bad_template);
    CHECK(errc_of([] { build_summary_prompt({}, kDefaultSummaryPrompt); }) == Errc::no_candidates);
  }

  TEST_CASE("QA prompt templates")
  {
    CHECK(std::string(kDefaultQaPrompt1) == "Question: what object is in this image? Answer:");
    CHECK(build_qa_followup(kDefaultQaPrompt2, "chair") ==
          "Question: what is the structure and geometry of this chair?");
  }

  TEST_CASE("summary normalisation")
  {
    CHECK(normalize_summary_text("  \"A red chair.\"\n") == "A red chair.");
    CHECK(normalize_summary_text("line one\nline two") == "line one line two");
    CHECK(normalize_summary_text("'quoted'") == "quoted");
    CHECK(normalize_summary_text("\"\"twice\"\"") == "\"twice\"");
    CHECK(normalize_summary_text("\xe2\x80\x9c" "curly" "\xe2\x80\x9d") == "curly");
    CHECK(normalize_summary_text("it's fine") == "it's fine");
  }

  TEST_CASE("consolidation with the echoing mock")
  {
    auto backends = make_mock_backends(0, 8);
    std::vector<ViewCaption> selected;
    for (int v = 0; v < 8; ++v) {
      selected.push_back({"toy bomb with a fuse", v, 0.3});
    }
    const PipelineConfig config;
    const auto result = consolidate("u1", selected, *backends.summarizer, config);
    CHECK(result.caption.text == "toy bomb with a fuse");
    CHECK(result.caption.uid == "u1");
    CHECK(result.caption.source_view_captions == selected);
    CHECK(result.caption.mode == CaptionMode::STANDARD);
    CHECK(result.usage.prompt_tokens == count_tokens(result.prompt));
    // Exactly one caption per view reaches the summarizer.
    const auto open = result.prompt.find('\'') + 1;
    const auto joined = result.prompt.substr(open, result.prompt.find("'.") - open);
    CHECK(std::count(joined.begin(), joined.end(), ',') == 7);

    const auto single = consolidate("u2", {selected[0]}, *backends.summarizer, config);
    CHECK(single.prompt == build_summary_prompt({"toy bomb with a fuse"}, kDefaultSummaryPrompt));
    CHECK(errc_of([&] { consolidate("u3", {}, *backends.summarizer, config); }) == Errc::no_candidates);
  }

  TEST_CASE("refusal propagates as SummarizerRefused")
  {
    auto transport = std::make_shared<ScriptedTransport>(
        std::deque<ScriptedTransport::Step>{{HttpResponse{200, R"({"refusal":"no"})"}}});
    BackendEndpoint endpoint;
    endpoint.base_url = "test://";
    SummarizerClient summarizer(std::make_shared<RequestExecutor>(endpoint, transport));
    CHECK_THROWS_AS(consolidate("u", {{"a chair", 0, 0.1}}, summarizer, PipelineConfig{}), SummarizerRefused);
  }

  TEST_CASE("standard captioning gives N candidates per view")
  {
    TempDir dir;
    capforge::testing::write_renders(dir.path(), "u", 8);
    std::vector<ImageRef> images;
    for (int v = 0; v < 8; ++v) {
      images.push_back({(dir.path() / "u" / fmt::format("{}.png", v)).string()});
    }
    auto backends = make_mock_backends(0, 8);
    const PipelineConfig config;
    const auto views = caption_views(images, *backends.captioner, config);
    REQUIRE(views.size() == 8);
    for (int v = 0; v < 8; ++v) {
      CHECK(views[static_cast<std::size_t>(v)].view_index == v);
      REQUIRE(views[static_cast<std::size_t>(v)].candidates.size() == 5);
      for (int s = 0; s < 5; ++s) {
        CHECK(views[static_cast<std::size_t>(v)].candidates[static_cast<std::size_t>(s)].sample_index == s);
      }
    }
    const auto sel = select_view(views[0], images[0], *backends.embedder);
    CHECK(sel.rejected.size() == 4);
    CHECK(sel.chosen.view_index == 0);
  }

  TEST_CASE("two-stage QA substitutes the stage-1 answer")
  {
    TempDir dir;
    capforge::testing::write_renders(dir.path(), "u", 1);
    const ImageRef image{(dir.path() / "u" / "0.png").string()};
    auto backends = make_mock_backends(0, 8);
    PipelineConfig config;
    config.qa_mode = true;
    const auto view = qa_caption_view(image, 0, *backends.captioner, config);
    CHECK_FALSE(view.qa_fallback);
    CHECK(view.qa_object == backends.captioner->qa(image, config.qa_prompt_1, {config.nucleus_p}));
    const auto expected = backends.captioner->qa(image, build_qa_followup(config.qa_prompt_2, view.qa_object), 5,
                                                 {config.nucleus_p});
    REQUIRE(view.candidates.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(view.candidates[i].text == expected[i]);
    }
  }

  TEST_CASE("empty stage-1 answer falls back to standard captioning")
  {
    TempDir dir;
    capforge::testing::write_renders(dir.path(), "u", 1);
    const ImageRef image{(dir.path() / "u" / "0.png").string()};
    auto transport = std::make_shared<ScriptedTransport>(
        std::deque<ScriptedTransport::Step>{{HttpResponse{200, R"({"captions":[""]})"}}}, MockBackend(0, 8));
    BackendEndpoint endpoint;
    endpoint.base_url = "test://";
    CaptionerClient captioner(std::make_shared<RequestExecutor>(endpoint, transport));
    PipelineConfig config;
    config.qa_mode = true;
    const auto view = qa_caption_view(image, 0, captioner, config);
    CHECK(view.qa_fallback);
    CHECK(view.candidates.size() == 5);
    CHECK(view.candidates[0].text.rfind("a ", 0) == 0);
  }
}
