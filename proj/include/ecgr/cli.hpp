#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace ecgr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one command line (args excludes the program name). Usage errors
/// return 1, data and IO errors return 2.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace ecgr::cli
