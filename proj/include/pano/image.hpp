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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pano {

// Plain float raster, row-major, channels interleaved.
struct Image {
    std::int64_t h = 0, w = 0, c = 0;
    std::vector<float> data;

    Image() = default;
    Image(std::int64_t height, std::int64_t width, std::int64_t channels)
        : h(height), w(width), c(channels),
          data(static_cast<std::size_t>(height * width * channels), 0.0f) {}

    float* px(std::int64_t r, std::int64_t col) { return data.data() + (r * w + col) * c; }
    const float* px(std::int64_t r, std::int64_t col) const { return data.data() + (r * w + col) * c; }
    float& at(std::int64_t r, std::int64_t col, std::int64_t ch) { return px(r, col)[ch]; }
    float at(std::int64_t r, std::int64_t col, std::int64_t ch) const { return px(r, col)[ch]; }
    std::int64_t numel() const { return h * w * c; }
};

// Which value domain an equirectangular raster carries.
enum class Domain { Ldr01, HdrLinear, HdrCompressed };

inline const char* domain_name(Domain d) {
    switch (d) {
        case Domain::Ldr01: return "ldr01";
        case Domain::HdrLinear: return "hdr_linear";
        case Domain::HdrCompressed: return "hdr_compressed";
    }
    return "?";
}

// Equirectangular raster: width must be twice the height. Pixel (r,c) centre
// maps to colatitude (r+0.5)*pi/H and longitude (c+0.5)*2*pi/W - pi.
struct ErpImage {
    Image img;
    Domain domain = Domain::HdrLinear;

    ErpImage() = default;
    ErpImage(std::int64_t h, std::int64_t w, std::int64_t c, Domain d) : img(h, w, c), domain(d) {
        if (w != 2 * h)
            throw std::invalid_argument("ErpImage: width " + std::to_string(w) +
                                        " must be twice height " + std::to_string(h));
    }
    ErpImage(Image raster, Domain d) : img(std::move(raster)), domain(d) {
        if (img.w != 2 * img.h)
            throw std::invalid_argument("ErpImage: width " + std::to_string(img.w) +
                                        " must be twice height " + std::to_string(img.h));
    }

    std::int64_t h() const { return img.h; }
    std::int64_t w() const { return img.w; }
    std::int64_t c() const { return img.c; }
};

}  // namespace pano
