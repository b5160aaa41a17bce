#pragma once

#include <iosfwd>

namespace ocpad::cli {

/// Runs one `ocpad` invocation. Exit status: 0 on success, 2 on usage,
/// configuration or missing-input errors, 3 on runtime failures.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ocpad::cli
