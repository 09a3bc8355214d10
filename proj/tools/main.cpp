// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dualsplat::run(argc, argv, std::cout, std::cerr); }
