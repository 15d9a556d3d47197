#include "ckp/subprocess.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "ckp/error.hpp"

extern char** environ;

namespace ckp {

namespace {

// Reads everything currently available; returns true once EOF is reached.
bool drain_fd(int fd, std::string& sink) {
    char buf[4096];
    for (;;) {
        ssize_t n = ::read(fd, buf, sizeof(buf));
        if (n > 0) {
            sink.append(buf, static_cast<size_t>(n));
        } else if (n == 0) {
            return true;
        } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
            return false;
        } else if (errno == EINTR) {
            continue;
        } else {
            return true;
        }
    }
}

[[noreturn]] void child_exec(const std::vector<std::string>& argv, const RunOptions& opts,
                             int out_fd, int err_fd) {
    ::setpgid(0, 0); // own process group, so a timeout can kill the whole tree

    ::dup2(out_fd, STDOUT_FILENO);
    ::dup2(err_fd, STDERR_FILENO);
    ::close(out_fd);
    ::close(err_fd);

    if (!opts.cwd.empty()) {
        if (::chdir(opts.cwd.c_str()) != 0) {
            ::fprintf(stderr, "ckp: chdir %s: %s\n", opts.cwd.c_str(), std::strerror(errno));
            ::_exit(127);
        }
    }
    for (const auto& [name, value] : opts.env) {
        ::setenv(name.c_str(), value.c_str(), 1);
    }

    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) {
        cargv.push_back(const_cast<char*>(a.c_str()));
    }
    cargv.push_back(nullptr);

    ::execvp(cargv[0], cargv.data());
    ::fprintf(stderr, "ckp: exec %s: %s\n", cargv[0], std::strerror(errno));
    ::_exit(127);
}

} // namespace

RunResult run_argv(const std::vector<std::string>& argv, const RunOptions& opts) {
    if (argv.empty()) {
        raise(ErrorCode::InternalError, "empty argv");
    }

    int out_pipe[2];
    int err_pipe[2];
    if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0) {
        raise(ErrorCode::InternalError, std::string("pipe: ") + std::strerror(errno));
    }

    auto start = std::chrono::steady_clock::now();
    pid_t pid = ::fork();
    if (pid < 0) {
        raise(ErrorCode::InternalError, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::close(out_pipe[0]);
        ::close(err_pipe[0]);
        child_exec(argv, opts, out_pipe[1], err_pipe[1]);
    }

    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
    ::fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

    RunResult result;
    bool out_open = true;
    bool err_open = true;

    auto deadline = start;
    if (opts.timeout_s) {
        deadline += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(*opts.timeout_s));
    }

    while (out_open || err_open) {
        struct pollfd fds[2];
        nfds_t nfds = 0;
        int out_idx = -1;
        int err_idx = -1;
        if (out_open) {
            out_idx = static_cast<int>(nfds);
            fds[nfds++] = {out_pipe[0], POLLIN, 0};
        }
        if (err_open) {
            err_idx = static_cast<int>(nfds);
            fds[nfds++] = {err_pipe[0], POLLIN, 0};
        }

        int timeout_ms = -1;
        if (opts.timeout_s) {
            auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            timeout_ms = static_cast<int>(std::max<long long>(0, remaining.count()));
        }

        int rc = ::poll(fds, nfds, timeout_ms);
        if (rc < 0) {
            if (errno == EINTR) {
                continue;
            }
            break;
        }
        if (rc == 0) {
            // deadline hit: kill the child's whole process group
            result.timed_out = true;
            ::kill(-pid, SIGKILL);
            drain_fd(out_pipe[0], result.out);
            drain_fd(err_pipe[0], result.err);
            break;
        }
        if (out_idx >= 0 && fds[out_idx].revents != 0) {
            if (drain_fd(out_pipe[0], result.out)) {
                out_open = false;
            }
        }
        if (err_idx >= 0 && fds[err_idx].revents != 0) {
            if (drain_fd(err_pipe[0], result.err)) {
                err_open = false;
            }
        }
    }

    ::close(out_pipe[0]);
    ::close(err_pipe[0]);

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (result.timed_out) {
        result.exit_code = 128 + SIGKILL;
    } else if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    return result;
}

RunResult run_shell(const std::string& command, const RunOptions& opts) {
    return run_argv({"/bin/sh", "-c", command}, opts);
}

} // namespace ckp
