// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace infosieve::cli {

/// Runs one command line (args excludes the program name). Returns the
/// process exit status; usage errors print help to err and return 2.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace infosieve::cli
