#include <string>
#include <vector>

#include "ecgt/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ecgt::run_command(args);
}
