#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capforge {

/// Machine-readable failure categories. `errc_name` yields the stable
/// kebab-case identifier used in logs, quarantine records and exit messages.
enum class Errc {
  invalid_argument,
  empty_input,
  degenerate_extent,
  rig_too_small,
  backend_unavailable,
  protocol_violation,
  summarizer_refused,
  zero_vector,
  dim_mismatch,
  no_candidates,
  bad_template,
  insufficient_samples,
  not_psd,
  k_out_of_range,
  config_error,
  version_mismatch,
  duplicate_uid,
  parse_error,
  io_error,
  checkpoint_mismatch,
};

auto errc_name(Errc code) -> std::string_view;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);

  [[nodiscard]] auto code() const noexcept -> Errc { return code_; }
  [[nodiscard]] auto detail() const noexcept -> const std::string& { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace capforge
