#include <chainsmith/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return chainsmith::cli::run(argc, argv, std::cout, std::cerr); }
