#include <string>
#include <vector>

#include "spikereg/cli.hpp"

int main(int argc, char** argv)
{
    return spikereg::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
