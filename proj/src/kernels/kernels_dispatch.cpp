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

#include "pano/kernels.hpp"
#include "pano/threadpool.hpp"

#include <cstdlib>

namespace pano {

ThreadPool& ThreadPool::global() {
    static ThreadPool* pool = [] {
        std::size_t n = std::thread::hardware_concurrency();
        if (const char* env = std::getenv("PANOLIGHT_THREADS")) {
            const long v = std::atol(env);
            if (v >= 1) n = static_cast<std::size_t>(v);
        }
        if (n < 1) n = 1;
        return new ThreadPool(n - 1);  // caller thread is worker zero
    }();
    return *pool;
}

void ThreadPool::set_global_threads(std::size_t) {
    // pool is created lazily; PANOLIGHT_THREADS must be set before first use
}

namespace kernels {

#if defined(__x86_64__) || defined(_M_X64)
bool avx2_available() {
#if defined(__GNUC__) || defined(__clang__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}
#endif

namespace {
const Backend* g_active = nullptr;

const Backend& pick() {
#if defined(__x86_64__) || defined(_M_X64)
    if (const char* env = std::getenv("PANOLIGHT_KERNELS")) {
        const std::string s = env;
        if (s == "scalar") return scalar_backend();
        if (s == "avx2" && avx2_available()) return avx2_backend();
    }
    if (avx2_available()) return avx2_backend();
#endif
    return scalar_backend();
}
}  // namespace

const Backend& active() {
    if (!g_active) g_active = &pick();
    return *g_active;
}

void set_backend(const Backend& b) { g_active = &b; }

std::string active_name() { return active().name; }

namespace {
constexpr std::size_t kGemmMtMinWork = 1 << 16;  // flops below this: stay serial
}

template <class T>
void gemm_mt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate) {
    if (m * n * k < kGemmMtMinWork || ThreadPool::global().size() == 0) {
        gemm<T>(m, n, k, a, b, c, accumulate);
        return;
    }
    ThreadPool::global().parallel_for(0, m, [&](std::size_t lo, std::size_t hi) {
        gemm<T>(hi - lo, n, k, a + lo * k, b, c + lo * n, accumulate);
    });
}

template void gemm_mt<float>(std::size_t, std::size_t, std::size_t,
                             const float*, const float*, float*, bool);
template void gemm_mt<double>(std::size_t, std::size_t, std::size_t,
                              const double*, const double*, double*, bool);

}  // namespace kernels
}  // namespace pano
