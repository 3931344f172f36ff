#ifndef ABCM_CLI_HPP
#define ABCM_CLI_HPP

#include <string>
#include <vector>

namespace abcm {

// Full command-line front end, argv[0] excluded. Returns the process exit
// code: 0 on success, nonzero after printing a one-line diagnostic.
int run_cli(const std::vector<std::string>& args);

}  // namespace abcm

#endif
