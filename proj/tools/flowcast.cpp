#include <iostream>

#include "flowcast/cli.hpp"

int main(int argc, char** argv) { return flowcast::run_cli(argc, argv, std::cout, std::cerr); }
