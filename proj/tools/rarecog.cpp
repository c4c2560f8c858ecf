#include <iostream>

#include "rarecog/cli.hpp"

int main(int argc, char** argv) { return rarecog::run_cli(argc, argv, std::cout, std::cerr); }
