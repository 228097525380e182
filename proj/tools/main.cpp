#include "gnnkit/cli.hpp"

int main(int argc, char** argv) { return gnnkit::cli::run(argc, argv); }
