#include "wsiseg/process.hpp"

#include "wsiseg/errors.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <mutex>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace wsiseg {

namespace {

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
}

}  // namespace

ChildProcess::ChildProcess(const std::vector<std::string>& argv) {
    if (argv.empty() || argv.front().empty()) throw ConfigError("external backend command is empty");
    ignore_sigpipe();

    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw Error(std::string("pipe: ") + std::strerror(errno));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    pid_t pid = -1;
    const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        throw ConfigError("cannot start external backend '" + argv.front() + "': " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFL, ::fcntl(to_child_, F_GETFL) | O_NONBLOCK);
    ::fcntl(from_child_, F_SETFL, ::fcntl(from_child_, F_GETFL) | O_NONBLOCK);
}

ChildProcess::~ChildProcess() {
    if (pid_ <= 0) return;
    close_fd(to_child_);
    for (int i = 0; i < 50; ++i) {
        int status = 0;
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
            pid_ = -1;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill();
}

void ChildProcess::kill() {
    close_fd(to_child_);
    close_fd(from_child_);
    if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        int status = 0;
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

ChildProcess::Outcome ChildProcess::exchange(const std::vector<std::string>& requests,
                                             const std::function<bool(std::string_view)>& on_line,
                                             std::chrono::milliseconds timeout) {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + timeout;

    std::string out;
    for (const auto& r : requests) {
        out += r;
        out += '\n';
    }
    std::size_t written = 0;
    bool can_write = to_child_ >= 0;

    auto drain_lines = [&]() -> bool {
        std::size_t start = 0;
        for (std::size_t nl; (nl = pending_.find('\n', start)) != std::string::npos; start = nl + 1) {
            std::string_view line(pending_.data() + start, nl - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (line.empty()) continue;
            if (on_line(line)) {
                pending_.erase(0, nl + 1);
                return true;
            }
        }
        pending_.erase(0, start);
        return false;
    };

    if (drain_lines()) return Outcome::Completed;
    if (from_child_ < 0) return Outcome::EndOfStream;

    char buf[1 << 16];
    while (true) {
        const auto now = clock::now();
        if (now >= deadline) return Outcome::TimedOut;
        const int wait_ms =
            static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;

        pollfd fds[2];
        int nfds = 0;
        fds[nfds++] = {from_child_, POLLIN, 0};
        const bool want_write = can_write && written < out.size();
        if (want_write) fds[nfds++] = {to_child_, POLLOUT, 0};
        const int rc = ::poll(fds, static_cast<nfds_t>(nfds), wait_ms);
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw Error(std::string("poll: ") + std::strerror(errno));
        }
        if (rc == 0) continue;

        if (want_write && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
            const ssize_t n = ::write(to_child_, out.data() + written, out.size() - written);
            if (n > 0) {
                written += static_cast<std::size_t>(n);
            } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
                can_write = false;  // child closed its stdin; keep reading what it sent
            }
        }
        if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
            const ssize_t n = ::read(from_child_, buf, sizeof buf);
            if (n > 0) {
                pending_.append(buf, static_cast<std::size_t>(n));
                if (drain_lines()) return Outcome::Completed;
            } else if (n == 0) {
                return Outcome::EndOfStream;
            } else if (errno != EAGAIN && errno != EINTR) {
                return Outcome::EndOfStream;
            }
        }
    }
}

}  // namespace wsiseg
