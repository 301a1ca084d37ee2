// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "pgru/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pgru::run_cli(args, std::cout, std::cerr);
}
