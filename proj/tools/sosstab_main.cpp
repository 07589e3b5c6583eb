#include <string>
#include <vector>

#include "sosstab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sosstab::run_cli(std::move(args));
}
