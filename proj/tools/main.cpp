#include "superspread/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return superspread::cli::run(argc, argv, std::cout, std::cerr);
}
