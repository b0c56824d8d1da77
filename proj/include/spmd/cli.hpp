#pragma once

#include <iosfwd>

namespace spmd::cli {

/// Process exit codes of the `spmd` executable.
enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kParseError = 2,    ///< expression, spec or CSV did not parse
    kWorkerFailure = 3, ///< a worker failed; also I/O and spawn failures
    kTimeout = 4,
};

/// Runs one of the subcommands master | worker | bench | eval | report.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spmd::cli
