#include <iostream>

#include "seqscope/cli.hpp"

int main(int argc, char** argv) {
  return seqscope::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
