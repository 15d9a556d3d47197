#include <iostream>
#include <string>
#include <vector>

#include "ckp/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ckp::cli::dispatch(args, std::cout, std::cerr);
}
