#pragma once

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ptycho {

/// Resolve a job count: explicit request > PTYCHO_JOBS env var > 1.
inline int resolve_jobs(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PTYCHO_JOBS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

/// Run fn(i) for i in [begin, end) on up to `jobs` threads. Iterations must
/// be independent; callers that reduce must do so afterwards in index order
/// so parallel and sequential execution stay bit-identical. The first
/// exception thrown by any iteration is rethrown on the calling thread.
template <typename F>
void parallel_for(int begin, int end, int jobs, F&& fn) {
    int count = end - begin;
    if (count <= 0) return;
    jobs = std::min(std::max(jobs, 1), count);
    if (jobs == 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(jobs);
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int t = 0; t < jobs; ++t) {
        threads.emplace_back([=, &fn, &error, &error_mutex] {
            try {
                for (int i = begin + t; i < end; i += jobs) fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace ptycho
