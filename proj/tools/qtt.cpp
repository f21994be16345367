#include <iostream>
#include <string>
#include <vector>

#include "qtt/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return qtt::run_cli(args, std::cout, std::cerr);
}
