#include <iostream>

#include "mcsurv/cli.hpp"

int main(int argc, char** argv) { return mcsurv::cli::run(argc, argv, std::cout, std::cerr); }
