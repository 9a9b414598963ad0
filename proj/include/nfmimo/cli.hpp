// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace nfmimo {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point of the nfmimo command-line tool. Returns the process exit code:
/// 0 on success, 1 on runtime or validation failures, 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nfmimo
