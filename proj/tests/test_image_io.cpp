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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "pano/image_io.hpp"
#include "pano/rng.hpp"

using namespace pano;

namespace {

Image random_hdr(Rng& rng, std::int64_t h, std::int64_t w) {
    Image img(h, w, 3);
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            float* p = img.px(r, c);
            if (rng.uniform() < 0.1) {
                p[0] = p[1] = p[2] = 0.0f;  // black pixels exercise the zero rule
            } else if (rng.uniform() < 0.15) {
                // constant run material for the RLE path
                p[0] = p[1] = p[2] = 0.25f;
            } else {
                const double s = std::exp(rng.uniform(-4.0, 4.0));
                for (int ch = 0; ch < 3; ++ch) p[ch] = static_cast<float>(s * rng.uniform(0.05, 1.0));
            }
        }
    // a few constant rows to guarantee long runs
    for (std::int64_t c = 0; c < w; ++c) {
        img.px(0, c)[0] = 3.5f;
        img.px(0, c)[1] = 1.0f;
        img.px(0, c)[2] = 0.5f;
    }
    return img;
}

std::size_t pixel_data_offset(const std::vector<std::uint8_t>& bytes) {
    // header ends after the resolution line
    int newlines = 0;
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        if (bytes[i] == '\n') {
            ++newlines;
            if (newlines == 4) return i + 1;  // magic, FORMAT, blank, -Y..+X..
        }
    }
    return bytes.size();
}

}  // namespace

TEST_CASE("RGBE encoding of the unit pixel matches the shared-exponent rule") {
    // width < 8 forces flat scanlines, so pixel bytes can be inspected directly
    Image img(2, 4, 3);
    std::fill(img.data.begin(), img.data.end(), 1.0f);
    img.px(1, 3)[0] = img.px(1, 3)[1] = img.px(1, 3)[2] = 0.0f;
    const auto bytes = io::write_rgbe(img);
    const std::size_t off = pixel_data_offset(bytes);
    // (1,1,1) -> mantissas (128,128,128), exponent byte 129
    CHECK(bytes[off + 0] == 128);
    CHECK(bytes[off + 1] == 128);
    CHECK(bytes[off + 2] == 128);
    CHECK(bytes[off + 3] == 129);
    // (0,0,0) -> all-zero quad
    const std::size_t black = off + (1 * 4 + 3) * 4;
    CHECK(bytes[black + 0] == 0);
    CHECK(bytes[black + 1] == 0);
    CHECK(bytes[black + 2] == 0);
    CHECK(bytes[black + 3] == 0);
    // decoding returns exactly 1.0
    const Image back = io::read_rgbe(bytes);
    CHECK(back.at(0, 0, 0) == 1.0f);
}

TEST_CASE("RGBE write-read-write is byte-identical (canonical form)") {
    Rng rng(42);
    for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{16, 32},
                        {7, 5} /* flat path */, {3, 300}}) {
        const Image img = random_hdr(rng, h, w);
        const auto b1 = io::write_rgbe(img);
        const Image mid = io::read_rgbe(b1);
        const auto b2 = io::write_rgbe(mid);
        CHECK(b1 == b2);
    }
}

TEST_CASE("RGBE round-trip stays within the shared-exponent quantization bound") {
    Rng rng(43);
    const Image img = random_hdr(rng, 12, 24);
    const Image back = io::read_rgbe(io::write_rgbe(img));
    for (std::int64_t r = 0; r < img.h; ++r)
        for (std::int64_t c = 0; c < img.w; ++c) {
            const float* a = img.px(r, c);
            const float* b = back.px(r, c);
            const double maxc = std::max({a[0], a[1], a[2]});
            for (int ch = 0; ch < 3; ++ch)
                CHECK(std::abs(static_cast<double>(a[ch]) - b[ch]) <= maxc / 256.0 + 1e-12);
        }
}

TEST_CASE("RGBE reader flags malformed input with a byte offset") {
    Image img(8, 16, 3);
    std::fill(img.data.begin(), img.data.end(), 0.5f);
    auto good = io::write_rgbe(img);

    SUBCASE("bad magic") {
        auto bad = good;
        bad[0] = 'X';
        CHECK_THROWS_AS(io::read_rgbe(bad), io::ParseError);
    }
    SUBCASE("truncated scanline") {
        auto bad = good;
        bad.resize(bad.size() - 5);
        try {
            io::read_rgbe(bad);
            FAIL("expected ParseError");
        } catch (const io::ParseError& e) {
            CHECK(std::string(e.what()).find("at byte") != std::string::npos);
        }
    }
    SUBCASE("wrong format line") {
        std::string s(good.begin(), good.end());
        const auto at = s.find("32-bit_rle_rgbe");
        s.replace(at, 3, "64-");
        CHECK_THROWS_AS(io::read_rgbe(std::vector<std::uint8_t>(s.begin(), s.end())), io::ParseError);
    }
}

TEST_CASE("PFM round trip is exact and honours the endianness flag") {
    Rng rng(44);
    Image img(5, 9, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(-10, 10));
    const auto bytes = io::write_pfm(img);
    const Image back = io::read_pfm(bytes);
    CHECK(back.data == img.data);

    // flip the scale sign and byte-swap the payload: same image
    std::string s(bytes.begin(), bytes.end());
    const auto at = s.find("-1.000000");
    REQUIRE(at != std::string::npos);
    std::vector<std::uint8_t> swapped(bytes.begin(), bytes.end());
    swapped.erase(swapped.begin() + static_cast<long>(at));  // "-1.000000" -> "1.000000"
    const std::size_t payload = at + std::strlen("1.000000") + 1;
    for (std::size_t i = payload; i + 3 < swapped.size(); i += 4) {
        std::swap(swapped[i], swapped[i + 3]);
        std::swap(swapped[i + 1], swapped[i + 2]);
    }
    const Image big = io::read_pfm(swapped);
    CHECK(big.data == img.data);
}

TEST_CASE("PFM reader rejects NaN payloads") {
    Image img(2, 2, 1);
    img.data = {1.0f, 2.0f, std::nanf(""), 4.0f};
    auto bytes = io::write_pfm(img);
    CHECK_THROWS_AS(io::read_pfm(bytes), io::ParseError);
}

TEST_CASE("PPM writer clamps to [0,255] and round-trips 8-bit data") {
    Image img(2, 3, 3);
    img.data = {0.0f, 0.5f, 1.0f, -0.3f, 1.7f, 0.25f, 0.1f, 0.2f, 0.3f,
                0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f, 1.0f, 0.0f, 1.0f};
    const auto bytes = io::write_ppm(img);
    const Image back = io::read_ppm(bytes);
    CHECK(back.at(0, 1, 0) == 0.0f);                      // clamped below
    CHECK(back.at(0, 1, 1) == 1.0f);                      // clamped above
    CHECK(back.at(0, 0, 1) == doctest::Approx(0.5).epsilon(0.01));
    const auto twice = io::write_ppm(back);
    CHECK(twice == bytes);
}

TEST_CASE("gamma compression maps [0, 2^6.6] onto [0,2] and inverts exactly") {
    ErpImage hdr(2, 4, 1, Domain::HdrLinear);
    const double ceiling = std::pow(2.0, 6.6);  // ~97.00586
    CHECK(ceiling == doctest::Approx(97.00586).epsilon(1e-6));
    hdr.img.data = {0.0f, 1.0f, static_cast<float>(ceiling), 42.0f,
                    0.001f, 3.0f, 96.0f, 7.7f};
    const ErpImage comp = io::compress_hdr(hdr);
    CHECK(comp.domain == Domain::HdrCompressed);
    CHECK(comp.img.data[0] == 0.0f);
    CHECK(comp.img.data[1] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(comp.img.data[2] == doctest::Approx(2.0).epsilon(1e-6));
    for (float v : comp.img.data) CHECK(v <= 2.0f + 1e-6f);

    const ErpImage back = io::expand_hdr(comp);
    for (std::size_t i = 0; i < back.img.data.size(); ++i) {
        const double rel = std::abs(back.img.data[i] - hdr.img.data[i]) /
                           std::max(1e-6, static_cast<double>(hdr.img.data[i]));
        CHECK(rel < 1e-5);
    }

    ErpImage neg(2, 4, 1, Domain::HdrLinear);
    neg.img.data[3] = -0.5f;
    CHECK_THROWS_AS(io::compress_hdr(neg), std::invalid_argument);
}

TEST_CASE("dataset scale hook is a plain linear multiply") {
    Rng rng(45);
    ErpImage hdr(4, 8, 3, Domain::HdrLinear);
    for (auto& v : hdr.img.data) v = static_cast<float>(rng.uniform(0, 5));
    const ErpImage same = io::apply_dataset_scale(hdr, 1.0);
    CHECK(same.img.data == hdr.img.data);
    const ErpImage there = io::apply_dataset_scale(hdr, 340.0);
    const ErpImage back = io::apply_dataset_scale(there, 1.0 / 340.0);
    for (std::size_t i = 0; i < hdr.img.data.size(); ++i)
        CHECK(back.img.data[i] == doctest::Approx(hdr.img.data[i]).epsilon(1e-6));
}

TEST_CASE("metric tonemap: fixed points, monotonicity, unit value") {
    Image img(1, 4, 1);
    img.data = {0.0f, 0.5f, 1.0f, 4.0f};
    const Image t = io::tonemap_for_metrics(img);
    CHECK(t.data[0] == 0.0f);
    CHECK(t.data[2] == doctest::Approx(std::pow(0.5, 1.0 / 2.2)).epsilon(1e-7));
    for (int i = 1; i < 4; ++i) CHECK(t.data[i] >= t.data[i - 1]);
    for (float v : t.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}
