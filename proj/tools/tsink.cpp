#include <iostream>

#include "tsink/cli.hpp"

int main(int argc, char** argv) { return tsink::run_cli(argc, argv, std::cout, std::cerr); }
