#include <iostream>

#include "dubeval/cli.hpp"

int main(int argc, char** argv) { return dubeval::cli::Run(argc, argv, std::cout, std::cerr); }
