#include "mgpf/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mgpf::cli::run(argc, argv, std::cout, std::cerr); }
