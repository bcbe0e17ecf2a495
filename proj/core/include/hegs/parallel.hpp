#pragma once

#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace hegs {

// Fixed-size worker pool for data-parallel loops. Work is split into disjoint
// contiguous index ranges, so results are bitwise identical for any thread
// count; only ops whose outputs are element-disjoint use it (reductions stay
// serial). Thread count comes from HEGS_THREADS (default 1).
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(threads_from_env());
        return pool;
    }

    int threads() const { return static_cast<int>(workers_.size()) + 1; }

    void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
        if (n <= 0) return;
        const int t = threads();
        if (t == 1 || n == 1 || in_parallel_region()) {
            fn(0, n);  // nested calls run inline
            return;
        }
        in_parallel_region() = true;
        const int64_t chunk = (n + t - 1) / t;
        {
            std::unique_lock<std::mutex> lk(mu_);
            tasks_.clear();
            for (int i = 1; i < t; ++i) {
                int64_t b = chunk * i;
                int64_t e = std::min<int64_t>(n, b + chunk);
                if (b >= e) break;
                tasks_.push_back({&fn, b, e});
            }
            pending_ = static_cast<int>(tasks_.size());
            ++generation_;
            cv_work_.notify_all();
        }
        fn(0, std::min<int64_t>(n, chunk));
        {
            std::unique_lock<std::mutex> lk(mu_);
            cv_done_.wait(lk, [&] { return pending_ == 0; });
        }
        in_parallel_region() = false;
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            stop_ = true;
            cv_work_.notify_all();
        }
        for (auto& w : workers_) w.join();
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

private:
    static int threads_from_env() {
        const char* env = std::getenv("HEGS_THREADS");
        if (!env) return 1;
        int t = std::atoi(env);
        if (t <= 0) t = static_cast<int>(std::thread::hardware_concurrency());
        return t < 1 ? 1 : t;
    }

    explicit ThreadPool(int threads) {
        for (int i = 1; i < threads; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    struct Task {
        const std::function<void(int64_t, int64_t)>* fn;
        int64_t begin, end;
    };

    static bool& in_parallel_region() {
        thread_local bool flag = false;
        return flag;
    }

    void worker_loop() {
        uint64_t seen = 0;
        in_parallel_region() = true;  // workers never re-fan-out
        while (true) {
            Task task{nullptr, 0, 0};
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_work_.wait(lk, [&] { return stop_ || (generation_ != seen && !tasks_.empty()); });
                if (stop_) return;
                if (tasks_.empty()) {
                    seen = generation_;
                    continue;
                }
                task = tasks_.back();
                tasks_.pop_back();
                if (tasks_.empty()) seen = generation_;
            }
            (*task.fn)(task.begin, task.end);
            {
                std::unique_lock<std::mutex> lk(mu_);
                if (--pending_ == 0) cv_done_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_work_, cv_done_;
    std::vector<Task> tasks_;
    uint64_t generation_ = 0;
    int pending_ = 0;
    bool stop_ = false;
};

inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    ThreadPool::instance().parallel_for(n, fn);
}

} // namespace hegs
