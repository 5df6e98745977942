// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iostream>

namespace eva::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad flags, bad config
inline constexpr int kExitData = 2;     // unreadable, malformed or inconsistent inputs
inline constexpr int kExitNumeric = 3;  // non-finite results, failed selftest

int run(int argc, const char* const* argv, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace eva::cli
