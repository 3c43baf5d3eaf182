#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gridcert::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitCertified = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitInconclusive = 2;

/// Runs `gridcert <args...>` in-process. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gridcert::cli
