#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return ocpad::cli::dispatch(argc, argv, std::cout, std::cerr); }
