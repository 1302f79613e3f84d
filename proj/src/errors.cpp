#include "capforge/errors.hpp"

namespace capforge {

auto errc_name(Errc code) -> std::string_view
{
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::empty_input: return "empty-input";
    case Errc::degenerate_extent: return "degenerate-extent";
    case Errc::rig_too_small: return "rig-too-small";
    case Errc::backend_unavailable: return "backend-unavailable";
    case Errc::protocol_violation: return "protocol-violation";
    case Errc::summarizer_refused: return "summarizer-refused";
    case Errc::zero_vector: return "zero-vector";
    case Errc::dim_mismatch: return "dim-mismatch";
    case Errc::no_candidates: return "no-candidates";
    case Errc::bad_template: return "bad-template";
    case Errc::insufficient_samples: return "insufficient-samples";
    case Errc::not_psd: return "not-psd";
    case Errc::k_out_of_range: return "k-out-of-range";
    case Errc::config_error: return "config-error";
    case Errc::version_mismatch: return "version-mismatch";
    case Errc::duplicate_uid: return "duplicate-uid";
    case Errc::parse_error: return "parse-error";
    case Errc::io_error: return "io-error";
    case Errc::checkpoint_mismatch: return "checkpoint-mismatch";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(errc_name(code)) + (detail.empty() ? "" : ": " + detail)),
      code_(code),
      detail_(detail)
{
}

}  // namespace capforge
