#pragma once

#include <iosfwd>

namespace kc::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kUsageError = 2;

/// The whole `kc` command line. Output that main() would print goes to `out`
/// and `err`, which lets tests drive the CLI in-process.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kc::cli
