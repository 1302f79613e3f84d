#pragma once

#include <ostream>

#include <json.hpp>

namespace capforge {

inline constexpr int kExitOk = 0;
inline constexpr int kExitQuarantine = 1;
inline constexpr int kExitFatal = 2;

/// Parses and runs one command line. Returns the process exit code:
/// 0 on success, 1 if any item was quarantined or skipped, 2 on a fatal
/// configuration or input error.
auto run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) -> int;

/// Request/response pairs produced by the in-process mock, for checking
/// other implementations of the backend protocol.
auto protocol_test_vectors() -> nlohmann::ordered_json;

}  // namespace capforge
