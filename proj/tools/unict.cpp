#include <iostream>

#include "unict/cli/commands.hpp"

int main(int argc, char** argv) {
  return unict::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
