#include <iostream>

#include "nslab/cli.hpp"

int main(int argc, char** argv) {
  return nslab::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
