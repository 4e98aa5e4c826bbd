#include <iostream>
#include <string>
#include <vector>

#include "vacscreen/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vacscreen::cli::run(args, std::cout, std::cerr);
}
