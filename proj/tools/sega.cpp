#include "sega/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return sega::cli::run(argc, argv, std::cout, std::cerr); }
