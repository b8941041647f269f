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

#include "pano/image.hpp"

// Bit-exact raster I/O (Radiance RGBE, PFM, PPM) and the HDR <-> network
// range mapping used throughout training.

namespace pano::io {

class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " at byte " + std::to_string(byte_offset)),
          offset(byte_offset) {}
    std::size_t offset;
};

// ---- Radiance .hdr (shared-exponent RGBE) ----
// Reader accepts RLE and flat scanlines; writer emits RLE (flat when the
// width is outside the RLE-encodable range). Zero exponent byte is black.
Image read_rgbe(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_rgbe(const Image& img);

// ---- PFM (32-bit float, scale-line sign selects endianness) ----
Image read_pfm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_pfm(const Image& img);

// ---- PPM (binary P6, 8-bit) ----
Image read_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_ppm(const Image& img);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

// format by extension (.hdr / .pfm / .ppm)
Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& img);

// ---- value-domain mapping ----

// gamma compression of linear radiance into [0, 2]: clip to [0, 2^6.6],
// then x^(1/6.6); expand is the exact inverse on the clipped domain.
constexpr double kHdrGamma = 6.6;
ErpImage compress_hdr(const ErpImage& hdr);
ErpImage expand_hdr(const ErpImage& compressed);

// linear rescale hook for externally calibrated datasets
ErpImage apply_dataset_scale(const ErpImage& hdr, double factor);

// display mapping used for metric comparison and LDR network inputs:
// x/(1+x) followed by gamma 1/2.2, clamped to [0,1]
Image tonemap_for_metrics(const Image& linear);
ErpImage tonemap_for_metrics(const ErpImage& hdr);

}  // namespace pano::io
