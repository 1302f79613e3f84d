#include "capforge/cost_model.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "capforge/errors.hpp"

namespace capforge {

auto Cents::str() const -> std::string
{
  const auto sign = cents_ < 0 ? "-" : "";
  const auto abs = cents_ < 0 ? -cents_ : cents_;
  return fmt::format("{}${}.{:02}", sign, abs / 100, abs % 100);
}

auto round_half_up_cents(double dollars) -> Cents
{
  if (!std::isfinite(dollars) || dollars < 0.0) {
    throw Error(Errc::invalid_argument, "cost must be finite and non-negative");
  }
  // The nudge absorbs binary representation error at exact half-cent values
  // such as 0.125 * 100.
  return Cents(static_cast<std::int64_t>(std::floor(dollars * 100.0 + 0.5 + 1e-9)));
}

auto validate_rates(const CostRates& r) -> std::vector<std::string>
{
  std::vector<std::string> out;
  auto check = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      out.push_back(fmt::format("{} must be positive", name));
    }
  };
  check(r.gpu_price_per_hour, "gpu_price_per_hour");
  check(r.captioner_iters_per_hour, "captioner_iters_per_hour");
  check(r.embedder_iters_per_hour, "embedder_iters_per_hour");
  check(r.llm_price_per_1k_tokens, "llm_price_per_1k_tokens");
  check(r.human_cost_per_1k, "human_cost_per_1k");
  check(r.human_speed_per_day, "human_speed_per_day");
  check(r.pipeline_speed_per_day, "pipeline_speed_per_day");
  check(r.default_avg_prompt_tokens, "default_avg_prompt_tokens");
  check(r.no_selection_avg_prompt_tokens, "no_selection_avg_prompt_tokens");
  return out;
}

auto gpu_stage_cost(double iters_per_hour, double iters_per_object, double objects, double price_per_hour) -> Cents
{
  if (!(iters_per_hour > 0.0) || !(price_per_hour > 0.0)) {
    throw Error(Errc::invalid_argument, "GPU throughput and price must be positive");
  }
  if (iters_per_object < 0.0 || objects < 0.0) {
    throw Error(Errc::invalid_argument, "work amounts must be non-negative");
  }
  const double hours = objects * iters_per_object / iters_per_hour;
  return round_half_up_cents(hours * price_per_hour);
}

auto llm_token_cost(double avg_tokens_per_object, double price_per_1k_tokens, double objects) -> Cents
{
  if (avg_tokens_per_object < 0.0 || price_per_1k_tokens < 0.0 || objects < 0.0) {
    throw Error(Errc::invalid_argument, "token cost inputs must be non-negative");
  }
  return round_half_up_cents(avg_tokens_per_object / 1000.0 * price_per_1k_tokens * objects);
}

auto pipeline_cost(const PipelineConfig& config, const CostRates& rates, const CostOptions& options) -> CostBreakdown
{
  if (const auto problems = validate_rates(rates); !problems.empty()) {
    throw Error(Errc::invalid_argument, problems.front());
  }
  const double views = config.views_per_object;
  CostBreakdown b;
  b.objects = options.objects;
  b.caption_selection = options.caption_selection;
  b.captioner_passes = config.qa_mode ? 2 : 1;
  b.captioner = gpu_stage_cost(rates.captioner_iters_per_hour, views, options.objects, rates.gpu_price_per_hour) *
                b.captioner_passes;
  b.embedder = options.caption_selection
                   ? gpu_stage_cost(rates.embedder_iters_per_hour, views, options.objects, rates.gpu_price_per_hour)
                   : Cents(0);
  b.avg_prompt_tokens = options.measured_avg_prompt_tokens.value_or(
      options.caption_selection ? rates.default_avg_prompt_tokens : rates.no_selection_avg_prompt_tokens);
  b.summarizer = llm_token_cost(b.avg_prompt_tokens, rates.llm_price_per_1k_tokens, options.objects);
  b.total = b.captioner + b.embedder + b.summarizer;
  return b;
}

auto CostBreakdown::render_table() const -> std::string
{
  std::string out = fmt::format("Cost per {:g} objects\n", objects);
  out += fmt::format("  {:<28}{:>10}\n", captioner_passes > 1 ? "Captioner (2 passes)" : "Captioner", captioner.str());
  out += fmt::format("  {:<28}{:>10}\n", "Embedder (selection)", embedder.str());
  out += fmt::format("  {:<28}{:>10}\n", "Summarizer", summarizer.str());
  out += fmt::format("  {:<28}{:>10}\n", "Total", total.str());
  out += fmt::format("  avg summary prompt tokens: {:.1f}\n", avg_prompt_tokens);
  out += "  note: completion tokens are not priced\n";
  return out;
}

auto compare_to_human(const CostRates& rates, Cents pipeline_total) -> HumanComparison
{
  HumanComparison c;
  c.pipeline_cost = pipeline_total;
  c.human_cost = round_half_up_cents(rates.human_cost_per_1k);
  c.cost_ratio = pipeline_total.count() == 0 ? std::numeric_limits<double>::infinity()
                                             : static_cast<double>(c.human_cost.count()) /
                                                   static_cast<double>(pipeline_total.count());
  c.speed_ratio = rates.pipeline_speed_per_day / rates.human_speed_per_day;
  return c;
}

auto compare_to_human(const CostRates& rates) -> HumanComparison
{
  return compare_to_human(rates, pipeline_cost(PipelineConfig{}, rates).total);
}

}  // namespace capforge
