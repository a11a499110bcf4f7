#include <iostream>

#include "restorekit/cli.hpp"

int main(int argc, char** argv) { return restorekit::run_command(argc, argv, std::cout, std::cerr); }
