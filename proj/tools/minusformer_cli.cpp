#include <iostream>

#include "minusformer/cli.hpp"

int main(int argc, char** argv) { return minusformer::cli::run(argc, argv, std::cout, std::cerr); }
