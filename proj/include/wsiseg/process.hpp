#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace wsiseg {

/// A child process whose stdin/stdout are connected to us by pipes; stderr is
/// inherited. The child is closed (stdin EOF, then SIGKILL after a grace
/// period) and reaped on destruction.
class ChildProcess {
public:
    enum class Outcome { Completed, EndOfStream, TimedOut };

    explicit ChildProcess(const std::vector<std::string>& argv);
    ~ChildProcess();
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    /// Writes every request line (newline appended) while reading response
    /// lines, interleaved so neither pipe can fill up and deadlock. `on_line`
    /// returns true once it has seen everything it is waiting for.
    Outcome exchange(const std::vector<std::string>& requests, const std::function<bool(std::string_view)>& on_line,
                     std::chrono::milliseconds timeout);

    void kill();
    bool alive() const { return pid_ > 0; }

private:
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string pending_;  // partial line carried between exchanges
};

}  // namespace wsiseg
