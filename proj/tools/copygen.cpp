// SPDX-License-Identifier: Apache-2.0
#include <copygen/cli/commands.hpp>

#include <iostream>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return copygen::cli::run_cli(std::move(args), std::cout, std::cerr);
}
