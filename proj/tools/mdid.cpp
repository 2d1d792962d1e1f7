#include <iostream>

#include "mdid/cli.hpp"

int main(int argc, char** argv) { return mdid::cli::run(argc, argv, std::cout, std::cerr); }
