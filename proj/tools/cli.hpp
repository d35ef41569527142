#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sacl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBadInput = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitVerifyFailed = 4;

// Environment variable holding the default output directory of `run`.
inline constexpr const char* kOutDirEnv = "SACL_OUT_DIR";

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sacl::cli
