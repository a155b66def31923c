#include <iostream>
#include <string>
#include <vector>

#include "damm/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return damm::cli::run(args, std::cout, std::cerr);
}
