// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "mrgd/cli.hpp"

int main(int argc, char** argv) { return mrgd::cli::run(argc, argv, std::cout, std::cerr); }
