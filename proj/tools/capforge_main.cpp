#include <iostream>

#include "capforge/cli.hpp"

auto main(int argc, char** argv) -> int
{
  return capforge::run_cli(argc, argv, std::cout, std::cerr);
}
