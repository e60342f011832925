#include <iostream>

#include "affect/cli.hpp"

int main(int argc, char** argv) { return affect::cli::run(argc, argv, std::cout, std::cerr); }
