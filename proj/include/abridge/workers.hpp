#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace abridge {

enum class worker_kind { threads, processes };

struct worker_options {
    worker_kind kind = worker_kind::threads;
    // Every worker must have reported by then, else errc::barrier_timeout.
    std::optional<std::chrono::milliseconds> deadline;
    // Runs on the launching thread once all workers are running.
    std::function<void()> on_started;
};

// Runs task(i) for every instance i in [0, n) concurrently and returns the
// payloads in instance order. Process workers are forked children; their
// payloads and errors come back through pipes. Forking is only safe while
// the calling process runs no other threads.
// The first failing instance's error is rethrown after all workers ended.
std::vector<std::string> run_workers(unsigned n, const std::function<std::string(unsigned)> &task,
                                     const worker_options &opts = {});

} // namespace abridge
