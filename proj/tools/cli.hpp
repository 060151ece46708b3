#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lmf::cli {

// Exit codes: 0 success, 1 runtime/check failure, 2 usage/config error.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace lmf::cli
