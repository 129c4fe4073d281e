#pragma once

#include <string>
#include <vector>

namespace wla::cli {

// full command surface; argv[0] excluded. Returns a process exit code.
int run(const std::vector<std::string>& args);

}  // namespace wla::cli
