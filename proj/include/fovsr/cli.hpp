#pragma once

namespace fovsr {

/// Top-level command dispatch. Returns the process exit code:
/// 0 success, 1 runtime failure, 2 usage error.
int run_cli(int argc, char** argv);

} // namespace fovsr
