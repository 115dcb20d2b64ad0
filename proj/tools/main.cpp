#include <iostream>
#include <string>
#include <vector>

#include "pixadapt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pixadapt::cli::run_cli(args, std::cout, std::cerr);
}
