#pragma once

namespace coat {

/// Entry point of the command-line tool. Returns 0 on success, 1 on usage
/// or configuration errors and 2 on runtime errors.
int cli_main(int argc, const char* const* argv);

}  // namespace coat
