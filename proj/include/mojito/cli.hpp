#pragma once

// Operator surface: preprocess -> train -> evaluate -> diagnose-heads, plus
// synthetic-data generation. Each run writes a RunManifest JSON sufficient to
// replay it. Commands are callable in-process for tests.

#include <string>
#include <vector>

namespace mojito::cli {

// argv-style entry point (without the program name). Returns the exit code.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace mojito::cli
