// SPDX-License-Identifier: Apache-2.0

#include "infosieve/cli.hpp"

int main(int argc, char** argv) { return infosieve::cli::main(argc, argv); }
