#include "commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return knnclean::cli_main(argc, argv, std::cout, std::cerr); }
