#pragma once

#include <string>
#include <vector>

namespace xtra::cli {

// Entry point shared by the binary and the in-process CLI tests.
// Exit codes: 0 success, 1 validation error, 2 runtime failure.
int run(const std::vector<std::string>& args);

}  // namespace xtra::cli
