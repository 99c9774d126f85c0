// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kalbert::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitNumericError = 3;

/// Name of the environment variable selecting log verbosity
/// (trace, debug, info, warn, error, off).
inline constexpr const char* kLogLevelEnv = "KALBERT_LOG_LEVEL";

/// Runs one command line (without the program name). Regular output goes
/// to out, logs and diagnostics to err. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kalbert::cli
