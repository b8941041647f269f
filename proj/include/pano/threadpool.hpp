/*
 * Copyright (C) 2026 The panolight authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace pano {

// Small fixed-size worker pool. Work items are closures; parallel_for splits
// an index range into one contiguous chunk per worker (static partition, so
// any floating-point work stays deterministic for a given pool size).
class ThreadPool {
  public:
    explicit ThreadPool(std::size_t threads) {
        for (std::size_t i = 0; i < threads; ++i)
            workers_.emplace_back([this] { run(); });
    }
    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            done_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    std::size_t size() const { return workers_.size(); }

    // Global pool, sized once from PANOLIGHT_THREADS or hardware concurrency.
    static ThreadPool& global();
    static void set_global_threads(std::size_t n);

    template <class F>
    void parallel_for(std::size_t begin, std::size_t end, F&& body) {
        const std::size_t total = end > begin ? end - begin : 0;
        if (total == 0) return;
        const std::size_t nworkers = workers_.size() + 1;  // caller participates
        if (total == 1 || nworkers == 1) {
            body(begin, end);
            return;
        }
        const std::size_t chunk = (total + nworkers - 1) / nworkers;
        std::mutex donemu;
        std::condition_variable donecv;
        std::size_t pending = 0;
        std::size_t lo = begin;
        // queue all but the first chunk, run the first chunk on this thread
        const std::size_t mine_end = std::min(end, lo + chunk);
        for (std::size_t s = mine_end; s < end; s += chunk) {
            const std::size_t e = std::min(end, s + chunk);
            {
                std::lock_guard<std::mutex> lk(mu_);
                ++pending;
                jobs_.push([&, s, e] {
                    body(s, e);
                    std::lock_guard<std::mutex> dl(donemu);
                    if (--pending == 0) donecv.notify_one();
                });
            }
        }
        cv_.notify_all();
        body(lo, mine_end);
        std::unique_lock<std::mutex> lk(donemu);
        donecv.wait(lk, [&] { return pending == 0; });
    }

  private:
    void run() {
        for (;;) {
            std::function<void()> job;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [this] { return done_ || !jobs_.empty(); });
                if (done_ && jobs_.empty()) return;
                job = std::move(jobs_.front());
                jobs_.pop();
            }
            job();
        }
    }

    std::vector<std::thread> workers_;
    std::queue<std::function<void()>> jobs_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool done_ = false;
};

}  // namespace pano
