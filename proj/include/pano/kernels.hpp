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

#include <cstddef>
#include <string>

// Data-parallel inner loops used by the tensor engine. Every operation has a
// scalar reference kernel and (on x86-64 with AVX2+FMA) a vector variant; the
// active backend is picked once at startup from CPUID. Both variants follow
// the same accumulation order and use fused multiply-add rounding, so their
// results are bit-identical -- the equivalence suite asserts exact equality.

namespace pano::kernels {

struct Backend {
    const char* name;

    // C[m x n] = A[m x k] * B[k x n], row-major, contiguous.
    // accumulate=true adds into C instead of overwriting.
    void (*gemm_f32)(std::size_t m, std::size_t n, std::size_t k,
                     const float* a, const float* b, float* c, bool accumulate);
    void (*gemm_f64)(std::size_t m, std::size_t n, std::size_t k,
                     const double* a, const double* b, double* c, bool accumulate);

    void (*add_f32)(std::size_t n, const float* a, const float* b, float* out);
    void (*add_f64)(std::size_t n, const double* a, const double* b, double* out);
    void (*sub_f32)(std::size_t n, const float* a, const float* b, float* out);
    void (*sub_f64)(std::size_t n, const double* a, const double* b, double* out);
    void (*mul_f32)(std::size_t n, const float* a, const float* b, float* out);
    void (*mul_f64)(std::size_t n, const double* a, const double* b, double* out);
    void (*div_f32)(std::size_t n, const float* a, const float* b, float* out);
    void (*div_f64)(std::size_t n, const double* a, const double* b, double* out);

    // y += s * x
    void (*axpy_f32)(std::size_t n, float s, const float* x, float* y);
    void (*axpy_f64)(std::size_t n, double s, const double* x, double* y);
    // out = s * a
    void (*scale_f32)(std::size_t n, float s, const float* a, float* out);
    void (*scale_f64)(std::size_t n, double s, const double* a, double* out);
};

const Backend& scalar_backend();
#if defined(__x86_64__) || defined(_M_X64)
const Backend& avx2_backend();
bool avx2_available();
#endif

// Active backend (CPUID-selected; override with set_backend for tests).
const Backend& active();
void set_backend(const Backend& b);
std::string active_name();

// Thin typed wrappers over the active backend.
template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
          T* c, bool accumulate);
template <>
inline void gemm<float>(std::size_t m, std::size_t n, std::size_t k,
                        const float* a, const float* b, float* c, bool acc) {
    active().gemm_f32(m, n, k, a, b, c, acc);
}
template <>
inline void gemm<double>(std::size_t m, std::size_t n, std::size_t k,
                         const double* a, const double* b, double* c, bool acc) {
    active().gemm_f64(m, n, k, a, b, c, acc);
}

// Row-parallel gemm: splits [0,m) across the worker pool. Each output element
// is still produced by exactly one thread with the same inner order, so the
// result is identical to the single-thread call.
template <class T>
void gemm_mt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate);

template <class T>
void ew_add(std::size_t n, const T* a, const T* b, T* out);
template <>
inline void ew_add<float>(std::size_t n, const float* a, const float* b, float* o) {
    active().add_f32(n, a, b, o);
}
template <>
inline void ew_add<double>(std::size_t n, const double* a, const double* b, double* o) {
    active().add_f64(n, a, b, o);
}

template <class T>
void ew_sub(std::size_t n, const T* a, const T* b, T* out);
template <>
inline void ew_sub<float>(std::size_t n, const float* a, const float* b, float* o) {
    active().sub_f32(n, a, b, o);
}
template <>
inline void ew_sub<double>(std::size_t n, const double* a, const double* b, double* o) {
    active().sub_f64(n, a, b, o);
}

template <class T>
void ew_mul(std::size_t n, const T* a, const T* b, T* out);
template <>
inline void ew_mul<float>(std::size_t n, const float* a, const float* b, float* o) {
    active().mul_f32(n, a, b, o);
}
template <>
inline void ew_mul<double>(std::size_t n, const double* a, const double* b, double* o) {
    active().mul_f64(n, a, b, o);
}

template <class T>
void ew_div(std::size_t n, const T* a, const T* b, T* out);
template <>
inline void ew_div<float>(std::size_t n, const float* a, const float* b, float* o) {
    active().div_f32(n, a, b, o);
}
template <>
inline void ew_div<double>(std::size_t n, const double* a, const double* b, double* o) {
    active().div_f64(n, a, b, o);
}

template <class T>
void axpy(std::size_t n, T s, const T* x, T* y);
template <>
inline void axpy<float>(std::size_t n, float s, const float* x, float* y) {
    active().axpy_f32(n, s, x, y);
}
template <>
inline void axpy<double>(std::size_t n, double s, const double* x, double* y) {
    active().axpy_f64(n, s, x, y);
}

template <class T>
void scale(std::size_t n, T s, const T* a, T* out);
template <>
inline void scale<float>(std::size_t n, float s, const float* a, float* o) {
    active().scale_f32(n, s, a, o);
}
template <>
inline void scale<double>(std::size_t n, double s, const double* a, double* o) {
    active().scale_f64(n, s, a, o);
}

}  // namespace pano::kernels
