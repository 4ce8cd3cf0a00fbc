#pragma once

#include <iosfwd>

namespace tminfer::cli {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2 };

/// Entry point of the tminfer command line; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tminfer::cli
