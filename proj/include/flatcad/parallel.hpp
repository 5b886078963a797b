#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace flatcad {

// Number of worker threads: hardware concurrency capped by FLATCAD_THREADS.
inline int worker_count() {
    static const int n = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        if (const char* env = std::getenv("FLATCAD_THREADS")) {
            const int cap = std::atoi(env);
            if (cap >= 1 && cap < hw) hw = cap;
        }
        return hw;
    }();
    return n;
}

// Work is always split into a fixed number of chunks, independent of the
// thread count, and chunk results are combined in chunk order by the caller.
// This keeps floating-point reductions bitwise identical across runs, which
// the determinism contract requires.
inline constexpr int kReduceChunks = 32;

namespace detail {

class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(worker_count() - 1);
        return pool;
    }

    // Runs work(chunk) for chunk in [0, chunks); the calling thread
    // participates. The first exception thrown by any chunk is rethrown here.
    void run(int chunks, const std::function<void(int)>& work) {
        if (chunks <= 0) return;
        if (workers_.empty() || chunks == 1) {
            for (int c = 0; c < chunks; ++c) work(c);
            return;
        }
        // Each submission owns its state; a worker that wakes late holds a
        // reference to the old job whose chunks are exhausted, never to a
        // recycled counter.
        auto job = std::make_shared<Job>();
        job->work = &work;
        job->total = chunks;
        job->pending.store(chunks, std::memory_order_relaxed);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            job_ = job;
        }
        cv_.notify_all();
        execute(*job);
        {
            std::unique_lock<std::mutex> lock(mutex_);
            done_cv_.wait(lock, [&] { return job->pending.load(std::memory_order_acquire) == 0; });
            if (job_ == job) job_ = nullptr;
        }
        if (job->error) std::rethrow_exception(job->error);
    }

private:
    struct Job {
        const std::function<void(int)>* work = nullptr;
        std::atomic<int> next{0};
        std::atomic<int> pending{0};
        int total = 0;
        std::exception_ptr error = nullptr;
    };

    explicit ThreadPool(int extra_workers) {
        for (int i = 0; i < extra_workers; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    void execute(Job& job) {
        for (;;) {
            const int c = job.next.fetch_add(1, std::memory_order_relaxed);
            if (c >= job.total) break;
            try {
                (*job.work)(c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mutex_);
                if (!job.error) job.error = std::current_exception();
            }
            if (job.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                std::lock_guard<std::mutex> lock(mutex_);
                done_cv_.notify_all();
            }
        }
    }

    void worker_loop() {
        std::shared_ptr<Job> last;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_.wait(lock, [&] { return stop_ || (job_ && job_ != last); });
                if (stop_) return;
                job = job_;
            }
            last = job;
            execute(*job);
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::shared_ptr<Job> job_;
    bool stop_ = false;
};

}  // namespace detail

// Splits [0, n) into `chunks` contiguous ranges and calls
// fn(chunk_index, begin, end) for each, possibly from different threads.
// Chunk boundaries depend only on n and chunks, never on the thread count.
template <typename Fn>
void parallel_chunks(std::size_t n, int chunks, Fn&& fn) {
    if (n == 0) return;
    if (static_cast<std::size_t>(chunks) > n) chunks = static_cast<int>(n);
    std::function<void(int)> work = [&](int c) {
        const std::size_t b = n * static_cast<std::size_t>(c) / chunks;
        const std::size_t e = n * static_cast<std::size_t>(c + 1) / chunks;
        fn(c, b, e);
    };
    detail::ThreadPool::instance().run(chunks, work);
}

}  // namespace flatcad
