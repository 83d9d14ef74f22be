#include <iostream>
#include <string>
#include <vector>

#include "lager/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return lager::cli::run(args, std::cout, std::cerr);
}
