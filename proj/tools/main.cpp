#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
    return roae::cli::run(argc, argv, std::cout, std::cerr);
}
