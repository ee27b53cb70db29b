// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define TSPRED_CPU_RELAX() _mm_pause()
#else
#define TSPRED_CPU_RELAX() std::this_thread::yield()
#endif

// Keeps leaf loop kernels out of lambda-heavy inlining regions where the
// vectorizer gives up.
#define TSPRED_NOINLINE __attribute__((noinline))

namespace tspred {

// Process-wide worker count for data-parallel kernels. Every chunk of work
// is a fixed range computed identically on any thread, so results are
// bitwise identical for any thread count.
inline int& thread_count_ref() {
    static int n = 1;
    return n;
}

inline void set_thread_count(int n) { thread_count_ref() = std::max(1, n); }
inline int thread_count() { return thread_count_ref(); }

inline int hardware_threads() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

namespace detail_pool {

// Persistent helper threads with a spin-then-park wait. Jobs are chunked
// ranges handed out through an atomic cursor; helpers that wake late for a
// finished job simply find no chunks left.
class Pool {
public:
    static Pool& instance() {
        static Pool p;
        return p;
    }

    using Fn = void (*)(const void*, std::int64_t, std::int64_t);

    void run(const void* ctx, Fn fn, std::int64_t begin, std::int64_t end, std::int64_t chunk,
             int helpers) {
        ensure_workers(helpers);
        Job job;
        job.fn = fn;
        job.ctx = ctx;
        job.next.store(begin, std::memory_order_relaxed);
        job.end = end;
        job.chunk = chunk;
        {
            std::lock_guard<std::mutex> lock(mu_);
            // Only helpers that registered ready before this bump are
            // guaranteed to observe the new epoch; count exactly those so
            // the check-out rendezvous below cannot miss or over-count.
            job.active.store(std::min(helpers, ready_), std::memory_order_release);
            job_ = &job;
            epoch_.fetch_add(1, std::memory_order_release);
        }
        if (parked_.load(std::memory_order_acquire) > 0) cv_.notify_all();
        drain(&job);
        // The job lives on this stack frame: do not return until every
        // counted helper has checked out.
        while (job.active.load(std::memory_order_acquire) != 0) TSPRED_CPU_RELAX();
        {
            std::lock_guard<std::mutex> lock(mu_);
            job_ = nullptr;
        }
        if (job.error) std::rethrow_exception(job.error);
    }

    bool inside_worker() const { return in_worker_; }

private:
    struct Job {
        Fn fn = nullptr;
        const void* ctx = nullptr;
        std::atomic<std::int64_t> next{0};
        std::int64_t end = 0;
        std::int64_t chunk = 1;
        std::atomic<int> active{0};
        std::atomic<bool> failed{false};
        std::mutex err_mu;
        std::exception_ptr error;
    };

    static void drain(Job* job) {
        for (;;) {
            if (job->failed.load(std::memory_order_relaxed)) break;
            const std::int64_t b = job->next.fetch_add(job->chunk, std::memory_order_relaxed);
            if (b >= job->end) break;
            try {
                job->fn(job->ctx, b, std::min(job->end, b + job->chunk));
            } catch (...) {
                std::lock_guard<std::mutex> lock(job->err_mu);
                if (!job->error) job->error = std::current_exception();
                job->failed.store(true, std::memory_order_relaxed);
            }
        }
    }

    void ensure_workers(int helpers) {
        if (static_cast<int>(workers_.size()) >= helpers) return;
        std::lock_guard<std::mutex> lock(spawn_mu_);
        while (static_cast<int>(workers_.size()) < helpers)
            workers_.emplace_back([this] { worker_loop(); });
    }

    void worker_loop() {
        in_worker_ = true;
        std::uint64_t seen;
        {
            std::lock_guard<std::mutex> lock(mu_);
            seen = epoch_.load(std::memory_order_acquire);
            ++ready_;
        }
        for (;;) {
            // Spin briefly for low dispatch latency, then park.
            bool got = false;
            for (int spin = 0; spin < 20000; ++spin) {
                if (epoch_.load(std::memory_order_acquire) != seen) {
                    got = true;
                    break;
                }
                TSPRED_CPU_RELAX();
            }
            if (!got) {
                std::unique_lock<std::mutex> lock(mu_);
                parked_.fetch_add(1, std::memory_order_acq_rel);
                cv_.wait(lock, [&] {
                    return stop_ || epoch_.load(std::memory_order_acquire) != seen;
                });
                parked_.fetch_sub(1, std::memory_order_acq_rel);
                if (stop_) return;
            }
            Job* job;
            {
                std::lock_guard<std::mutex> lock(mu_);
                seen = epoch_.load(std::memory_order_acquire);
                job = job_;
            }
            if (!job) continue;
            drain(job);
            job->active.fetch_sub(1, std::memory_order_acq_rel);
        }
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stop_ = true;
            epoch_.fetch_add(1, std::memory_order_release);
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    std::mutex mu_;
    std::mutex spawn_mu_;
    std::condition_variable cv_;
    std::atomic<std::uint64_t> epoch_{0};
    std::atomic<int> parked_{0};
    Job* job_ = nullptr;
    int ready_ = 0;
    bool stop_ = false;
    std::vector<std::thread> workers_;
    static thread_local bool in_worker_;
};

inline thread_local bool Pool::in_worker_ = false;

}  // namespace detail_pool

// Splits [begin, end) into chunks of at least min_grain elements and runs
// them on the shared pool. Nested calls (from inside a pool worker) run
// serially. Body signature: void(int64_t chunk_begin, int64_t chunk_end).
template <class Body>
void parallel_ranges(std::int64_t begin, std::int64_t end, Body&& body,
                     std::int64_t min_grain = 1) {
    const std::int64_t n = end - begin;
    if (n <= 0) return;
    auto& pool = detail_pool::Pool::instance();
    const int workers = thread_count();
    const std::int64_t max_chunks = min_grain > 0 ? (n + min_grain - 1) / min_grain : n;
    if (workers <= 1 || max_chunks <= 1 || pool.inside_worker()) {
        body(begin, end);
        return;
    }
    // Chunk so each thread sees a few pieces without shredding the range.
    const std::int64_t want = std::min<std::int64_t>(max_chunks, workers);
    const std::int64_t chunk = std::max<std::int64_t>(min_grain, (n + want - 1) / want);
    const auto fn = [](const void* ctx, std::int64_t b, std::int64_t e) {
        (*static_cast<const std::remove_reference_t<Body>*>(ctx))(b, e);
    };
    pool.run(&body, +fn, begin, end, chunk, workers - 1);
}

}  // namespace tspred
