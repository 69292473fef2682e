#include "perspqp/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return perspqp::run_cli(argc, argv, std::cout, std::cerr); }
