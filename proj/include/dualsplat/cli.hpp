// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace dualsplat {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;  // I/O, dataset, training failures
inline constexpr int kExitUsage = 2;    // unknown subcommand/flag, bad value

/// Entry point of the `dualsplat` tool. Errors are reported on `err` as a
/// single line `error: <kind>: <message>`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dualsplat
