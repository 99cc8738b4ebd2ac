#include <iostream>

#include "sceneforge_cli/cli.hpp"

int main(int argc, char** argv) {
  return sceneforge::cli::run_cli(argc, argv, std::cout, std::cerr);
}
