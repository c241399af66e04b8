#include <string>
#include <vector>

#include "kervolt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return kervolt::cli::run(args);
}
