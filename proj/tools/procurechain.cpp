#include <iostream>

#include "procurechain/admin_cli.hpp"

int main(int argc, char** argv) { return procurechain::run_cli(argc, argv, std::cout, std::cerr); }
