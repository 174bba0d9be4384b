#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace picsift {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitPromptNotFound = 2;

/// Entry point of the `picsift` tool (index, search, bench, serve).
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace picsift
