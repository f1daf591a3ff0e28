#include <iostream>

#include "uwbg/cli.hpp"

int main(int argc, char** argv)
{
    return uwbg::cli::run(argc, argv, std::cout, std::cerr);
}
