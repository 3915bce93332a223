#include <iostream>

#include "ccat/cli.hpp"

int main(int argc, char** argv) {
  return ccat::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
