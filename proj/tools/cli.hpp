#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace tpp::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kData = 3;
inline constexpr int kNumeric = 4;

/// Runs the command-line interface; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace tpp::cli
