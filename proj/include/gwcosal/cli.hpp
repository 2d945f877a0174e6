#ifndef GWCOSAL_CLI_HPP
#define GWCOSAL_CLI_HPP

#include <string>
#include <vector>

namespace gwcosal::pipeline {

// Entry point behind the gwcosal binary; args excludes the program name.
// Exit codes: 0 success, 1 failed verification (gradcheck), 2 usage or
// input error, 3 numerical divergence during training.
int run_cli(const std::vector<std::string>& args);

} // namespace gwcosal::pipeline

#endif
