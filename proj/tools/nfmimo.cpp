// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "nfmimo/cli.hpp"

int main(int argc, char** argv) { return nfmimo::run_cli(argc, argv, std::cout, std::cerr); }
