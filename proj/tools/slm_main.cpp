#include <iostream>
#include <string>
#include <vector>

#include "slm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return slm::run(args, std::cout, std::cerr);
}
