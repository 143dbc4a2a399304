#include "memeguard/cli/cli.h"

int main(int argc, char** argv) {
  return memeguard::cli::Run(std::vector<std::string>(argv + 1, argv + argc));
}
