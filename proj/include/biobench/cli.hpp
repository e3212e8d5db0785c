#pragma once

#include <string>
#include <vector>

namespace biobench {

// Exit codes: 0 success, 1 usage error, 2 run failure.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);  // args without argv[0]

}  // namespace biobench
