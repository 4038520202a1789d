/**
 * @file cli.hpp
 * @brief Entry point of the ctrlink command-line tool.
 */

#pragma once

#include <iosfwd>

#include "ctrlink/error.hpp"

namespace ctrlink::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitProtocol = 2;
inline constexpr int kExitTimeout = 3;
inline constexpr int kExitUsage = 4;

/// Maps an error to the documented exit status.
int exit_code_for(Errc code) noexcept;

/// Runs one invocation. Results go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctrlink::cli
