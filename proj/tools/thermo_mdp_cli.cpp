#include <iostream>

#include "thermo_mdp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return thermo_mdp::cli::run(args, std::cout, std::cerr);
}
