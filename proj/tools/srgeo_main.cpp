#include <iostream>
#include <string>
#include <vector>

#include "srgeo/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return srgeo::cli::run(std::move(args), std::cout, std::cerr);
}
