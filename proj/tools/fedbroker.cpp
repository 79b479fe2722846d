#include <iostream>
#include <string>
#include <vector>

#include "fedbroker/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fedbroker::cli_dispatch(args, std::cout, std::cerr);
}
