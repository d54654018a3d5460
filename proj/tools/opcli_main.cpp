#include <iostream>
#include <string>
#include <vector>

#include "ecig/opcli/opcli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ecig::opcli::run(args, std::cout, std::cerr);
}
