#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ckp {

struct RunOptions {
    std::filesystem::path cwd;                                  // empty = inherit
    std::vector<std::pair<std::string, std::string>> env;      // appended over inherited env
    std::optional<double> timeout_s;
};

struct RunResult {
    int exit_code = -1;    // 128+signal when terminated by a signal
    bool timed_out = false;
    std::string out;       // captured stdout
    std::string err;       // captured stderr
    double wall_time_s = 0.0;  // monotonic clock, spawn to exit

    bool ok() const { return exit_code == 0 && !timed_out; }
};

/// Execute argv[0] with the given arguments, no shell involved.
RunResult run_argv(const std::vector<std::string>& argv, const RunOptions& opts = {});

/// Execute a command line through `/bin/sh -c`.
RunResult run_shell(const std::string& command, const RunOptions& opts = {});

} // namespace ckp
