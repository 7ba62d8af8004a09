#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace prefopt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Entry point behind the `prefopt` binary. `args` excludes the program name.
/// Machine-readable results go to `out`, logs and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Writes `contents` to `path` through a temporary file and a rename. "-"
/// writes to `out` instead.
void write_output(const std::string& path, std::string_view contents, std::ostream& out);

}  // namespace prefopt::cli
