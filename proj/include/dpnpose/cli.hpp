#pragma once

#include <iosfwd>

namespace dpnpose {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Entry point for the `dpnpose` tool. Subcommands: train, decode, bench,
/// gradcheck, render, eval. Returns 0 on success, 1 on runtime failure and 2
/// on usage errors; diagnostics go to `err` as a single line.
int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dpnpose
