#include <iostream>

#include "mvopt/harness.hpp"

int main(int argc, char** argv) {
    return mvopt::harness::run_cli(argc, argv, std::cout, std::cerr);
}
