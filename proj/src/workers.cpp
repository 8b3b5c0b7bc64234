#include "abridge/workers.hpp"

#include <cerrno>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <exception>
#include <mutex>
#include <poll.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "abridge/error.hpp"
#include "abridge/file_lock.hpp"

namespace abridge {

namespace {

using clock = std::chrono::steady_clock;

struct outcome {
    bool done = false;
    std::string payload;
    std::exception_ptr failure;
};

[[noreturn]] void rethrow_first(std::vector<outcome> &results)
{
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i].failure)
            continue;
        try {
            std::rethrow_exception(results[i].failure);
        } catch (const error &e) {
            throw error(e.code(), "instance " + std::to_string(i) + ": " + e.what());
        } catch (const std::exception &e) {
            throw error(errc::io, "instance " + std::to_string(i) + ": " + e.what());
        }
    }
    std::terminate();
}

std::vector<std::string> collect(std::vector<outcome> &results, bool timed_out)
{
    for (const auto &r : results)
        if (r.failure)
            rethrow_first(results);
    if (timed_out) {
        unsigned missing = 0;
        for (const auto &r : results)
            missing += r.done ? 0 : 1;
        throw error(errc::barrier_timeout, std::to_string(missing) + " of " + std::to_string(results.size())
                    + " instances did not report before the deadline");
    }
    std::vector<std::string> out;
    for (auto &r : results)
        out.push_back(std::move(r.payload));
    return out;
}

std::vector<std::string> run_threads(unsigned n, const std::function<std::string(unsigned)> &task,
                                     const worker_options &opts)
{
    std::vector<outcome> results(n);
    std::mutex m;
    std::condition_variable cv;
    unsigned finished = 0;
    std::vector<std::thread> threads;
    for (unsigned i = 0; i < n; ++i)
        threads.emplace_back([&, i] {
            outcome o;
            try {
                o.payload = task(i);
            } catch (...) {
                o.failure = std::current_exception();
            }
            std::lock_guard g { m };
            results[i] = std::move(o);
            results[i].done = true;
            ++finished;
            cv.notify_all();
        });
    if (opts.on_started)
        opts.on_started();
    bool timed_out = false;
    {
        std::unique_lock g { m };
        if (opts.deadline)
            timed_out = !cv.wait_for(g, *opts.deadline, [&] { return finished == n; });
        else
            cv.wait(g, [&] { return finished == n; });
    }
    // threads cannot be cancelled; a late instance is still waited for
    for (auto &t : threads)
        t.join();
    return collect(results, timed_out);
}

void write_all(int fd, const std::string &s)
{
    std::size_t done = 0;
    while (done < s.size()) {
        const auto n = ::write(fd, s.data() + done, s.size() - done);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            return;
        done += static_cast<std::size_t>(n);
    }
}

// Child side wire format: status byte, then the payload ('0') or a 4-byte
// error code followed by the message ('1').
[[noreturn]] void child_main(int fd, unsigned i, const std::function<std::string(unsigned)> &task)
{
    std::string msg;
    try {
        msg = '0' + task(i);
    } catch (const error &e) {
        const auto code = static_cast<std::int32_t>(e.code());
        msg = '1' + std::string(reinterpret_cast<const char *>(&code), 4) + e.what();
    } catch (const std::exception &e) {
        const auto code = static_cast<std::int32_t>(errc::io);
        msg = '1' + std::string(reinterpret_cast<const char *>(&code), 4) + e.what();
    } catch (...) {
        msg = "1";
    }
    write_all(fd, msg);
    ::close(fd);
    ::_exit(0);
}

outcome decode(const std::string &raw, int status)
{
    outcome o;
    o.done = true;
    if (!raw.empty() && raw[0] == '0') {
        o.payload = raw.substr(1);
    } else if (raw.size() >= 5 && raw[0] == '1') {
        std::int32_t code;
        std::memcpy(&code, raw.data() + 1, 4);
        o.failure = std::make_exception_ptr(error(static_cast<errc>(code), raw.substr(5)));
    } else {
        o.failure = std::make_exception_ptr(error(errc::io, "worker process died (status " + std::to_string(status) + ")"));
    }
    return o;
}

std::vector<std::string> run_processes(unsigned n, const std::function<std::string(unsigned)> &task,
                                       const worker_options &opts)
{
    std::fflush(nullptr);
    std::vector<pid_t> pids;
    std::vector<unique_fd> pipes;
    auto reap_all = [&] {
        for (auto pid : pids)
            if (pid > 0) {
                ::kill(pid, SIGKILL);
                ::waitpid(pid, nullptr, 0);
            }
    };
    for (unsigned i = 0; i < n; ++i) {
        int fds[2];
        if (::pipe(fds) != 0) {
            reap_all();
            throw error(errc::io, std::string { "pipe: " } + std::strerror(errno));
        }
        const pid_t pid = ::fork();
        if (pid < 0) {
            ::close(fds[0]);
            ::close(fds[1]);
            reap_all();
            throw error(errc::io, std::string { "fork: " } + std::strerror(errno));
        }
        if (pid == 0) {
            ::close(fds[0]);
            for (auto &p : pipes)
                p.reset();
            child_main(fds[1], i, task);
        }
        ::close(fds[1]);
        pids.push_back(pid);
        pipes.emplace_back(fds[0]);
    }
    if (opts.on_started)
        opts.on_started();

    std::vector<std::string> raw(n);
    std::vector<bool> open(n, true);
    unsigned remaining = n;
    const auto deadline = opts.deadline ? clock::now() + *opts.deadline : clock::time_point::max();
    bool timed_out = false;
    while (remaining > 0) {
        std::vector<pollfd> pfds;
        std::vector<unsigned> who;
        for (unsigned i = 0; i < n; ++i)
            if (open[i]) {
                pfds.push_back(pollfd { pipes[i].get(), POLLIN, 0 });
                who.push_back(i);
            }
        int wait_ms = -1;
        if (opts.deadline) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
            if (left <= 0) {
                timed_out = true;
                break;
            }
            wait_ms = static_cast<int>(std::min<long long>(left, 1000));
        }
        const int r = ::poll(pfds.data(), pfds.size(), wait_ms);
        if (r < 0 && errno != EINTR) {
            reap_all();
            throw error(errc::io, std::string { "poll: " } + std::strerror(errno));
        }
        for (std::size_t k = 0; r > 0 && k < pfds.size(); ++k) {
            if (!(pfds[k].revents & (POLLIN | POLLHUP | POLLERR)))
                continue;
            char buf[65536];
            const auto got = ::read(pfds[k].fd, buf, sizeof buf);
            if (got > 0) {
                raw[who[k]].append(buf, static_cast<std::size_t>(got));
            } else if (got == 0 || errno != EINTR) {
                open[who[k]] = false;
                --remaining;
            }
        }
    }

    std::vector<outcome> results(n);
    for (unsigned i = 0; i < n; ++i) {
        if (open[i]) {
            ::kill(pids[i], SIGKILL);
            ::waitpid(pids[i], nullptr, 0);
            continue;
        }
        int status = 0;
        ::waitpid(pids[i], &status, 0);
        results[i] = decode(raw[i], status);
    }
    return collect(results, timed_out);
}

} // namespace

std::vector<std::string> run_workers(unsigned n, const std::function<std::string(unsigned)> &task,
                                     const worker_options &opts)
{
    if (n == 0)
        throw error(errc::invalid_argument, "need at least one worker");
    return opts.kind == worker_kind::threads ? run_threads(n, task, opts) : run_processes(n, task, opts);
}

} // namespace abridge
