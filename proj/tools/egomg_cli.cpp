#include <iostream>

#include "egomg/cli.hpp"

int main(int argc, char** argv) { return egomg::run_cli(argc, argv, std::cout, std::cerr); }
