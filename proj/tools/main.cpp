#include <iostream>
#include <string>
#include <vector>

#include "maskpipe/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return maskpipe::run_command(args, std::cout, std::cerr);
}
