#include "leddam/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return leddam::cli::run(argc, argv, std::cout, std::cerr);
}
