#include "mojito/cli.hpp"

int main(int argc, char** argv) { return mojito::cli::run(argc, argv); }
