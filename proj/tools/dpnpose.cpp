#include <iostream>

#include "dpnpose/cli.hpp"

int main(int argc, char** argv) { return dpnpose::parse_and_dispatch(argc, argv, std::cout, std::cerr); }
