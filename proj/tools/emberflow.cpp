#include <iostream>

#include "emberflow/cli.hpp"

int main(int argc, char** argv) { return emberflow::run_cli(argc, argv, std::cout, std::cerr); }
