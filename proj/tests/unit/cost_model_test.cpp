#include <doctest.h>

#include <cmath>
#include <random>

#include "capforge/cost_model.hpp"
#include "test_support.hpp"

using namespace capforge;
using capforge::testing::errc_of;

TEST_SUITE("cost_model")
{
  TEST_CASE("cents formatting and rounding")
  {
    CHECK(Cents(835).str() == "$8.35");
    CHECK(Cents(5).str() == "$0.05");
    CHECK(Cents(0).str() == "$0.00");
    CHECK(round_half_up_cents(3.7925925) == Cents(379));
    CHECK(round_half_up_cents(0.005) == Cents(1));
    CHECK(round_half_up_cents(4.179) == Cents(418));
    CHECK(round_half_up_cents(15.333) == Cents(1533));
    CHECK(errc_of([] { round_half_up_cents(-1.0); }) == Errc::invalid_argument);
  }

  TEST_CASE("GPU stage costs")
  {
    CHECK(gpu_stage_cost(2700, 8, 1000, 1.28) == Cents(379));
    CHECK(gpu_stage_cost(27000, 8, 1000, 1.28) == Cents(38));
    CHECK(gpu_stage_cost(1, 1, 0, 1.28) == Cents(0));
    CHECK(errc_of([] { gpu_stage_cost(0, 8, 1000, 1.28); }) == Errc::invalid_argument);
  }

  TEST_CASE("LLM token costs")
  {
    CHECK(llm_token_cost(139.3, 0.03, 1000) == Cents(418));
    CHECK(llm_token_cost(511.1, 0.03, 1000) == Cents(1533));
    CHECK(llm_token_cost(0, 0.03, 1000) == Cents(0));
  }

  TEST_CASE("default pipeline cost per 1k objects")
  {
    const auto c = pipeline_cost(PipelineConfig{}, CostRates{});
    CHECK(c.captioner == Cents(379));
    CHECK(c.embedder == Cents(38));
    CHECK(c.summarizer == Cents(418));
    CHECK(c.total == Cents(835));
    CHECK(c.total == c.captioner + c.embedder + c.summarizer);
    const auto table = c.render_table();
    CHECK(table.find("$3.79") != std::string::npos);
    CHECK(table.find("$8.35") != std::string::npos);
  }

  TEST_CASE("QA mode doubles the captioner")
  {
    PipelineConfig config;
    config.qa_mode = true;
    const auto c = pipeline_cost(config, CostRates{});
    CHECK(c.captioner == Cents(758));
    CHECK(c.captioner_passes == 2);
    CHECK(c.total == Cents(1214));
  }

  TEST_CASE("without selection the summarizer sees every candidate")
  {
    CostOptions options;
    options.caption_selection = false;
    const auto c = pipeline_cost(PipelineConfig{}, CostRates{}, options);
    CHECK(c.summarizer == Cents(1533));
    CHECK(c.embedder == Cents(0));
    CHECK(c.avg_prompt_tokens == 511.1);
  }

  TEST_CASE("measured prompt length overrides the default")
  {
    CostOptions options;
    options.measured_avg_prompt_tokens = 100.0;
    CHECK(pipeline_cost(PipelineConfig{}, CostRates{}, options).summarizer == Cents(300));
  }

  TEST_CASE("property: per-stage rounding makes totals exact sums")
  {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.01, 5000.0);
    for (int i = 0; i < 200; ++i) {
      CostRates r;
      r.captioner_iters_per_hour = u(rng);
      r.embedder_iters_per_hour = u(rng);
      r.gpu_price_per_hour = u(rng) / 100.0;
      r.llm_price_per_1k_tokens = u(rng) / 1000.0;
      CostOptions o;
      o.objects = std::floor(u(rng));
      const auto c = pipeline_cost(PipelineConfig{}, r, o);
      CHECK(c.total == c.captioner + c.embedder + c.summarizer);
    }
  }

  TEST_CASE("human comparison")
  {
    const auto h = compare_to_human(CostRates{});
    CHECK(h.cost_ratio == doctest::Approx(87.18 / 8.35));
    CHECK(h.speed_ratio == doctest::Approx(65000.0 / 1400.0));
    CHECK(h.cost_ratio > 10.0);
    CHECK(h.speed_ratio > 40.0);

    CostRates equal;
    equal.human_cost_per_1k = 8.35;
    equal.human_speed_per_day = equal.pipeline_speed_per_day;
    const auto e = compare_to_human(equal, Cents(835));
    CHECK(e.cost_ratio == doctest::Approx(1.0));
    CHECK(e.speed_ratio == doctest::Approx(1.0));

    CHECK(std::isinf(compare_to_human(CostRates{}, Cents(0)).cost_ratio));
  }

  TEST_CASE("rate validation")
  {
    CostRates r;
    r.gpu_price_per_hour = -1;
    CHECK_FALSE(validate_rates(r).empty());
    CHECK(errc_of([&] { pipeline_cost(PipelineConfig{}, r); }) == Errc::invalid_argument);
  }
}
