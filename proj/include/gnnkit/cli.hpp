#pragma once

// Command-line front end.  Exposed as a library call so tests can drive the
// commands in-process; tools/main.cpp is a thin wrapper.

namespace gnnkit::cli {

int run(int argc, const char* const* argv);

}  // namespace gnnkit::cli
