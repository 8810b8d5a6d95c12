#include <string>
#include <vector>

#include "strongstab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return strongstab::run_cli(args);
}
