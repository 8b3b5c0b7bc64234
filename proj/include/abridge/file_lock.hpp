#pragma once

#include <chrono>
#include <filesystem>
#include <utility>

namespace abridge {

// Owning POSIX file descriptor.
class unique_fd {
public:
    unique_fd() = default;
    explicit unique_fd(int fd) noexcept : _fd { fd } {}
    unique_fd(unique_fd &&o) noexcept : _fd { std::exchange(o._fd, -1) } {}
    unique_fd &operator=(unique_fd &&o) noexcept
    {
        if (this != &o) {
            reset();
            _fd = std::exchange(o._fd, -1);
        }
        return *this;
    }
    unique_fd(const unique_fd &) = delete;
    unique_fd &operator=(const unique_fd &) = delete;
    ~unique_fd() { reset(); }

    int get() const noexcept { return _fd; }
    explicit operator bool() const noexcept { return _fd >= 0; }
    void reset() noexcept;

private:
    int _fd = -1;
};

// Advisory exclusive lock on a sidecar file `<path>.lock`, held for the
// object's lifetime. Works across processes and across independent opens in
// one process.
class sidecar_lock {
public:
    // timeout == 0: a single non-blocking attempt. Throws errc::writer_busy
    // (zero timeout) or errc::lock_timeout.
    static sidecar_lock acquire(const std::filesystem::path &target, std::chrono::milliseconds timeout);

    sidecar_lock() = default;
    bool held() const noexcept { return static_cast<bool>(_fd); }
    void release() noexcept { _fd.reset(); }

private:
    explicit sidecar_lock(unique_fd fd) : _fd { std::move(fd) } {}
    unique_fd _fd;
};

// RAII flock() guard on an already-open descriptor.
class flock_guard {
public:
    enum class kind { shared, exclusive };
    flock_guard(int fd, kind k);
    ~flock_guard();
    flock_guard(const flock_guard &) = delete;
    flock_guard &operator=(const flock_guard &) = delete;

private:
    int _fd;
};

std::filesystem::path lock_path_for(const std::filesystem::path &target);

} // namespace abridge
