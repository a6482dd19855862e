#include <iostream>

#include "simdex/cli_io.hpp"

int main(int argc, char** argv) { return simdex::run_cli(argc, argv, std::cout, std::cerr); }
