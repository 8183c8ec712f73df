#include <iostream>
#include <string>
#include <vector>

#include "egoexo/cli/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return egoexo::cli::run(args, std::cout, std::cerr);
}
