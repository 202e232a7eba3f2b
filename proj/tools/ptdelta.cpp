#include <iostream>

#include "ptdelta/cli.hpp"

int main(int argc, char** argv) { return ptdelta::run_cli(argc, argv, std::cout, std::cerr); }
