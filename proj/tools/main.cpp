#include <iostream>

#include "igsgenre/cli/cli.hpp"

int main(int argc, char** argv) {
  return igsgenre::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
