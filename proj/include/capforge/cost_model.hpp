#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "capforge/core_types.hpp"

namespace capforge {

/// Whole cents. Every dollar figure leaves this module already rounded.
class Cents {
 public:
  constexpr Cents() = default;
  constexpr explicit Cents(std::int64_t cents) : cents_(cents) {}

  [[nodiscard]] constexpr auto count() const noexcept -> std::int64_t { return cents_; }
  [[nodiscard]] constexpr auto dollars() const noexcept -> double { return static_cast<double>(cents_) / 100.0; }
  /// "$8.35"
  [[nodiscard]] auto str() const -> std::string;

  constexpr auto operator+(Cents other) const -> Cents { return Cents(cents_ + other.cents_); }
  constexpr auto operator*(std::int64_t k) const -> Cents { return Cents(cents_ * k); }
  friend constexpr auto operator<=>(Cents, Cents) = default;

 private:
  std::int64_t cents_ = 0;
};

/// Rounds a non-negative dollar amount half-up to the cent.
auto round_half_up_cents(double dollars) -> Cents;

struct CostRates {
  double gpu_price_per_hour = 1.28;
  double captioner_iters_per_hour = 2700.0;
  double embedder_iters_per_hour = 27000.0;
  double llm_price_per_1k_tokens = 0.03;
  double human_cost_per_1k = 87.18;
  double human_speed_per_day = 1400.0;
  double pipeline_speed_per_day = 65000.0;
  /// Average summary prompt length when one selected caption per view is sent.
  double default_avg_prompt_tokens = 139.3;
  /// Average summary prompt length when every candidate caption is sent.
  double no_selection_avg_prompt_tokens = 511.1;
};

auto validate_rates(const CostRates& rates) -> std::vector<std::string>;

/// GPU hours needed for the work times the hourly price, rounded to cents.
/// Throws Error(invalid_argument) on a non-positive rate or price.
auto gpu_stage_cost(double iters_per_hour, double iters_per_object, double objects, double price_per_hour) -> Cents;

auto llm_token_cost(double avg_tokens_per_object, double price_per_1k_tokens, double objects) -> Cents;

struct CostBreakdown {
  Cents captioner;
  Cents embedder;
  Cents summarizer;
  Cents total;
  double avg_prompt_tokens = 0.0;
  int captioner_passes = 1;
  double objects = 1000.0;
  bool caption_selection = true;

  /// Table-shaped text rendering.
  [[nodiscard]] auto render_table() const -> std::string;
};

struct CostOptions {
  /// Average prompt tokens observed in a live run; overrides the rate default.
  std::optional<double> measured_avg_prompt_tokens;
  /// Without selection the summarizer sees all M x N candidates and no
  /// embedding pass runs.
  bool caption_selection = true;
  double objects = 1000.0;
};

/// Per-stage costs are rounded individually and then summed. QA mode runs
/// the captioner twice (identify, then describe), each pass its own stage.
auto pipeline_cost(const PipelineConfig& config, const CostRates& rates, const CostOptions& options = {})
    -> CostBreakdown;

struct HumanComparison {
  double cost_ratio = 0.0;   ///< human cost / pipeline cost; +inf if the pipeline is free
  double speed_ratio = 0.0;  ///< pipeline throughput / human throughput
  Cents pipeline_cost;
  Cents human_cost;
};

auto compare_to_human(const CostRates& rates, Cents pipeline_total) -> HumanComparison;
/// Against the default 8-view pipeline priced at `rates`.
auto compare_to_human(const CostRates& rates) -> HumanComparison;

}  // namespace capforge
