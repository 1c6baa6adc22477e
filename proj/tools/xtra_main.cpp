#include <string>
#include <vector>

#include "xtra/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return xtra::cli::run(args);
}
