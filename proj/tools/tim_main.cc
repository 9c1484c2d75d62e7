#include <iostream>
#include <string>
#include <vector>

#include "tim/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tim::run_cli(args, std::cout, std::cerr);
}
