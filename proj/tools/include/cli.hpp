#pragma once

#include <string>
#include <vector>

namespace spade::cli {

// Full command-line entry point, callable in-process. Returns the process
// exit code: 0 success, 1 usage/config error, 2 data error, 3 numeric
// failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args without argv[0]

}  // namespace spade::cli
