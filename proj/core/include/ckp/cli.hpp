#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ckp::cli {

/// Exit codes: 0 success, 1 operation error, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOperationError = 1;
inline constexpr int kExitUsage = 2;

/// Routes one command: `ckp <action> <module_kind>[:<entry>] [key=value]...
/// [--flag[=value]]...`. With --json, `out` receives exactly one JSON
/// object (the result, or {"error":{code,message}}) and diagnostics go to
/// `err`; without it output is human-readable.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string usage_text();
std::string verb_usage_text(const std::string& verb);

} // namespace ckp::cli
