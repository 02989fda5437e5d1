#include <iostream>
#include <string>
#include <vector>

#include "truthprobe/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return truthprobe::run_cli(args, std::cout, std::cerr);
}
