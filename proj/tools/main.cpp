#include <iostream>

#include "astree/cli.hpp"

int main(int argc, char** argv) { return astree::dispatch(argc, argv, std::cout, std::cerr); }
