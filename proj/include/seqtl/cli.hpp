// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace seqtl {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 1 invalid input or failed run, 2 filesystem error,
/// anything else comes from argument parsing.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace seqtl
