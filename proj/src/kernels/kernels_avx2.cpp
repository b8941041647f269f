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

// AVX2+FMA variants. This TU is the only one compiled with -mavx2 -mfma;
// nothing here may be called unless avx2_available() said yes.
//
// gemm keeps per-element accumulation in ascending k order (broadcast A,
// vector over columns of B), so lane results match the scalar reference
// bit for bit. Tail columns fall back to scalar fma with the same order.

#if defined(__x86_64__) || defined(_M_X64)

#include "pano/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace pano::kernels {
namespace {

void gemm_f32_avx2(std::size_t m, std::size_t n, std::size_t k, const float* a,
                   const float* b, float* c, bool accumulate) {
    const std::size_t n16 = n & ~std::size_t(15);
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        std::size_t j = 0;
        for (; j < n16; j += 16) {
            __m256 acc0 = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
            __m256 acc1 = accumulate ? _mm256_loadu_ps(crow + j + 8) : _mm256_setzero_ps();
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256 av = _mm256_set1_ps(arow[kk]);
                const float* brow = b + kk * n + j;
                acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow), acc0);
                acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + 8), acc1);
            }
            _mm256_storeu_ps(crow + j, acc0);
            _mm256_storeu_ps(crow + j + 8, acc1);
        }
        for (; j + 8 <= n; j += 8) {
            __m256 acc = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
            for (std::size_t kk = 0; kk < k; ++kk)
                acc = _mm256_fmadd_ps(_mm256_set1_ps(arow[kk]),
                                      _mm256_loadu_ps(b + kk * n + j), acc);
            _mm256_storeu_ps(crow + j, acc);
        }
        for (; j < n; ++j) {
            float acc = accumulate ? crow[j] : 0.0f;
            for (std::size_t kk = 0; kk < k; ++kk)
                acc = std::fma(arow[kk], b[kk * n + j], acc);
            crow[j] = acc;
        }
    }
}

void gemm_f64_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                   const double* b, double* c, bool accumulate) {
    const std::size_t n8 = n & ~std::size_t(7);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j < n8; j += 8) {
            __m256d acc0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
            __m256d acc1 = accumulate ? _mm256_loadu_pd(crow + j + 4) : _mm256_setzero_pd();
            for (std::size_t kk = 0; kk < k; ++kk) {
                const __m256d av = _mm256_set1_pd(arow[kk]);
                const double* brow = b + kk * n + j;
                acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), acc0);
                acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), acc1);
            }
            _mm256_storeu_pd(crow + j, acc0);
            _mm256_storeu_pd(crow + j + 4, acc1);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d acc = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
            for (std::size_t kk = 0; kk < k; ++kk)
                acc = _mm256_fmadd_pd(_mm256_set1_pd(arow[kk]),
                                      _mm256_loadu_pd(b + kk * n + j), acc);
            _mm256_storeu_pd(crow + j, acc);
        }
        for (; j < n; ++j) {
            double acc = accumulate ? crow[j] : 0.0;
            for (std::size_t kk = 0; kk < k; ++kk)
                acc = std::fma(arow[kk], b[kk * n + j], acc);
            crow[j] = acc;
        }
    }
}

void add_f32_avx2(std::size_t n, const float* a, const float* b, float* o) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(o + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) o[i] = a[i] + b[i];
}
void add_f64_avx2(std::size_t n, const double* a, const double* b, double* o) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] + b[i];
}
void sub_f32_avx2(std::size_t n, const float* a, const float* b, float* o) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(o + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) o[i] = a[i] - b[i];
}
void sub_f64_avx2(std::size_t n, const double* a, const double* b, double* o) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] - b[i];
}
void mul_f32_avx2(std::size_t n, const float* a, const float* b, float* o) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(o + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) o[i] = a[i] * b[i];
}
void mul_f64_avx2(std::size_t n, const double* a, const double* b, double* o) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] * b[i];
}
void div_f32_avx2(std::size_t n, const float* a, const float* b, float* o) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(o + i, _mm256_div_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) o[i] = a[i] / b[i];
}
void div_f64_avx2(std::size_t n, const double* a, const double* b, double* o) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) o[i] = a[i] / b[i];
}
void axpy_f32_avx2(std::size_t n, float s, const float* x, float* y) {
    const __m256 sv = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(sv, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}
void axpy_f64_avx2(std::size_t n, double s, const double* x, double* y) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(sv, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}
void scale_f32_avx2(std::size_t n, float s, const float* a, float* o) {
    const __m256 sv = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(o + i, _mm256_mul_ps(sv, _mm256_loadu_ps(a + i)));
    for (; i < n; ++i) o[i] = s * a[i];
}
void scale_f64_avx2(std::size_t n, double s, const double* a, double* o) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(o + i, _mm256_mul_pd(sv, _mm256_loadu_pd(a + i)));
    for (; i < n; ++i) o[i] = s * a[i];
}

}  // namespace

const Backend& avx2_backend() {
    static const Backend b{
        "avx2",
        &gemm_f32_avx2,  &gemm_f64_avx2,
        &add_f32_avx2,   &add_f64_avx2,
        &sub_f32_avx2,   &sub_f64_avx2,
        &mul_f32_avx2,   &mul_f64_avx2,
        &div_f32_avx2,   &div_f64_avx2,
        &axpy_f32_avx2,  &axpy_f64_avx2,
        &scale_f32_avx2, &scale_f64_avx2,
    };
    return b;
}

}  // namespace pano::kernels

#endif  // x86-64
