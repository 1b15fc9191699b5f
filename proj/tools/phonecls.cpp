#include <iostream>

#include "phonecls/cli.hpp"

int main(int argc, char** argv) { return phonecls::run_cli(argc, argv, std::cout, std::cerr); }
