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

// Reference kernels. These define the numeric contract: per output element,
// products are accumulated with fma() in ascending k order. The vector
// backends reproduce exactly this sequence of roundings.

#include "pano/kernels.hpp"

#include <cmath>

namespace pano::kernels {
namespace {

template <class T>
void gemm_ref(std::size_t m, std::size_t n, std::size_t k, const T* a,
              const T* b, T* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            T acc = accumulate ? crow[j] : T(0);
            for (std::size_t kk = 0; kk < k; ++kk)
                acc = std::fma(arow[kk], b[kk * n + j], acc);
            crow[j] = acc;
        }
    }
}

template <class T>
void add_ref(std::size_t n, const T* a, const T* b, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
template <class T>
void sub_ref(std::size_t n, const T* a, const T* b, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
template <class T>
void mul_ref(std::size_t n, const T* a, const T* b, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
template <class T>
void div_ref(std::size_t n, const T* a, const T* b, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}
template <class T>
void axpy_ref(std::size_t n, T s, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}
template <class T>
void scale_ref(std::size_t n, T s, const T* a, T* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = s * a[i];
}

}  // namespace

const Backend& scalar_backend() {
    static const Backend b{
        "scalar",
        &gemm_ref<float>,  &gemm_ref<double>,
        &add_ref<float>,   &add_ref<double>,
        &sub_ref<float>,   &sub_ref<double>,
        &mul_ref<float>,   &mul_ref<double>,
        &div_ref<float>,   &div_ref<double>,
        &axpy_ref<float>,  &axpy_ref<double>,
        &scale_ref<float>, &scale_ref<double>,
    };
    return b;
}

}  // namespace pano::kernels
