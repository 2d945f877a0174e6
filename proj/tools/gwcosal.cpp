#include <string>
#include <vector>

#include "gwcosal/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return gwcosal::pipeline::run_cli(args);
}
