#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace dsd::cli {

// Full command-line surface (debias / eval / ablate). Returns the process
// exit code: 0 ok, 2 usage, 3 data error, 4 divergence. Used by the binary
// and exposed through the python bindings.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace dsd::cli
