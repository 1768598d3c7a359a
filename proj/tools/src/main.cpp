// SPDX-License-Identifier: Apache-2.0

#include "ief/cli.hpp"

int main(int argc, char** argv) {
  return ief::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
