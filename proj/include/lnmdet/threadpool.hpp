#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace lnmdet {

// Fixed-size worker pool with a blocking parallel_for. Work items must write
// to disjoint outputs; callers perform reductions in index order afterwards,
// so numeric results do not depend on the thread count.
class ThreadPool {
public:
    explicit ThreadPool(int threads) {
        if (threads < 1) threads = 1;
        for (int t = 0; t < threads - 1; ++t) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ~ThreadPool() {
        {
            std::unique_lock lock(mutex_);
            stop_ = true;
        }
        work_cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    int size() const { return static_cast<int>(workers_.size()) + 1; }

    // Runs fn(i) for i in [0, n); blocks until all items complete. Calls from
    // inside a work item run inline: parallelism lives at the outermost level
    // and nested loops stay serial and deterministic.
    void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
        if (n <= 0) return;
        if (workers_.empty() || n == 1 || inside_item()) {
            for (std::int64_t i = 0; i < n; ++i) fn(i);
            return;
        }
        auto job = std::make_shared<Job>();
        job->fn = &fn;
        job->n = n;
        job->remaining.store(n, std::memory_order_relaxed);
        {
            std::unique_lock lock(mutex_);
            current_ = job;
            ++generation_;
        }
        work_cv_.notify_all();
        drain(*this, *job);
        {
            std::unique_lock lock(mutex_);
            done_cv_.wait(lock, [&] { return job->remaining.load(std::memory_order_acquire) == 0; });
            if (current_ == job) current_.reset();
        }
    }

    static ThreadPool& global() {
        auto& slot = global_slot();
        if (!slot) slot = std::make_unique<ThreadPool>(default_threads());
        return *slot;
    }

    static void set_global_threads(int threads) {
        global_slot() = std::make_unique<ThreadPool>(threads);
    }

private:
    struct Job {
        const std::function<void(std::int64_t)>* fn = nullptr;
        std::int64_t n = 0;
        std::atomic<std::int64_t> next{0};
        std::atomic<std::int64_t> remaining{0};
    };

    static std::unique_ptr<ThreadPool>& global_slot() {
        static std::unique_ptr<ThreadPool> pool;
        return pool;
    }

    static int default_threads() {
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }

    static bool& inside_item() {
        static thread_local bool flag = false;
        return flag;
    }

    static void drain(ThreadPool& pool, Job& job) {
        std::int64_t done = 0;
        for (;;) {
            std::int64_t i = job.next.fetch_add(1, std::memory_order_relaxed);
            if (i >= job.n) break;
            inside_item() = true;
            (*job.fn)(i);
            inside_item() = false;
            ++done;
        }
        if (done > 0 &&
            job.remaining.fetch_sub(done, std::memory_order_acq_rel) == done) {
            std::unique_lock lock(pool.mutex_);
            pool.done_cv_.notify_all();
        }
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lock(mutex_);
                work_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                job = current_;
            }
            if (job) drain(*this, *job);
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable work_cv_;
    std::condition_variable done_cv_;
    std::shared_ptr<Job> current_;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace lnmdet
