#include <iostream>

#include "patchhopf/cli.hpp"

int main(int argc, char** argv) {
  return patchhopf::cli::run_cli(argc, argv, std::cout, std::cerr);
}
