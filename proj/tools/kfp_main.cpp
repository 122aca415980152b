#include <iostream>

#include "kfp/cli.hpp"

int main(int argc, char** argv) { return kfp::run_cli(argc, argv, std::cout, std::cerr); }
