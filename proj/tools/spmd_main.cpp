#include <iostream>

#include "spmd/cli.hpp"

int main(int argc, char** argv) { return spmd::cli::dispatch(argc, argv, std::cout, std::cerr); }
