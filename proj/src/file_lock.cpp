#include "abridge/file_lock.hpp"

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <sys/file.h>
#include <thread>
#include <unistd.h>

#include "abridge/error.hpp"

namespace abridge {

void unique_fd::reset() noexcept
{
    if (_fd >= 0)
        ::close(_fd);
    _fd = -1;
}

std::filesystem::path lock_path_for(const std::filesystem::path &target)
{
    auto p = target;
    p += ".lock";
    return p;
}

sidecar_lock sidecar_lock::acquire(const std::filesystem::path &target, std::chrono::milliseconds timeout)
{
    const auto lp = lock_path_for(target);
    unique_fd fd { ::open(lp.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644) };
    if (!fd)
        throw error(errc::io, "cannot open lock file " + lp.string() + ": " + std::strerror(errno));
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    auto backoff = std::chrono::microseconds { 100 };
    for (;;) {
        if (::flock(fd.get(), LOCK_EX | LOCK_NB) == 0)
            return sidecar_lock { std::move(fd) };
        if (errno != EWOULDBLOCK && errno != EINTR)
            throw error(errc::io, "flock " + lp.string() + ": " + std::strerror(errno));
        if (timeout.count() == 0)
            throw error(errc::writer_busy, target.string() + " is already open for writing");
        if (std::chrono::steady_clock::now() >= deadline)
            throw error(errc::lock_timeout, "timed out waiting for write lock on " + target.string());
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, std::chrono::microseconds { 5000 });
    }
}

flock_guard::flock_guard(int fd, kind k) : _fd { fd }
{
    const int op = k == kind::shared ? LOCK_SH : LOCK_EX;
    while (::flock(_fd, op) != 0) {
        if (errno != EINTR)
            throw error(errc::io, std::string { "flock: " } + std::strerror(errno));
    }
}

flock_guard::~flock_guard()
{
    ::flock(_fd, LOCK_UN);
}

} // namespace abridge
