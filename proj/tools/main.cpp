#include <string>
#include <vector>

#include "loadshare/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return loadshare::cli::run_main(args);
}
