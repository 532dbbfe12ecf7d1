#include <string>
#include <vector>

#include "motionpred/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return motionpred::cli::run(args);
}
