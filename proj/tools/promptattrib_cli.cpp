#include <iostream>

#include "promptattrib/cli.hpp"

int main(int argc, char** argv) {
  return promptattrib::run_command(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
