#include <unistd.h>

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  std::vector<std::string> args(argv + 1, argv + argc);
  drfmt::cli::Io io{std::cout, std::cerr, isatty(STDOUT_FILENO) != 0};
  const int code = drfmt::cli::run(args, io);
  std::cout.flush();
  return code;
}
