#include <iostream>
#include <string>
#include <vector>

#include "pinet/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return pinet::cli::run(args, std::cout, std::cerr);
}
