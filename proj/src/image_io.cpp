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

#include "pano/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace pano::io {

namespace {

struct Cursor {
    const std::vector<std::uint8_t>& b;
    std::size_t pos = 0;

    std::uint8_t byte() {
        if (pos >= b.size()) throw ParseError("unexpected end of data", pos);
        return b[pos++];
    }
    void bytes(std::uint8_t* dst, std::size_t n) {
        if (pos + n > b.size()) throw ParseError("unexpected end of data", pos);
        std::memcpy(dst, b.data() + pos, n);
        pos += n;
    }
    std::string line() {
        std::string s;
        for (;;) {
            const std::uint8_t c = byte();
            if (c == '\n') return s;
            s.push_back(static_cast<char>(c));
        }
    }
};

void put(std::vector<std::uint8_t>& out, const std::string& s) {
    out.insert(out.end(), s.begin(), s.end());
}

// ---- RGBE pixel codec ----

void rgbe_encode(const float* rgb, std::uint8_t* out4) {
    const float maxv = std::max(rgb[0], std::max(rgb[1], rgb[2]));
    if (!(maxv >= 1e-38f)) {  // black rule, catches zeros and denormal dust
        out4[0] = out4[1] = out4[2] = out4[3] = 0;
        return;
    }
    int e = 0;
    std::frexp(maxv, &e);
    double scl = std::ldexp(1.0, 8 - e);
    int m0 = static_cast<int>(rgb[0] * scl + 0.5);
    int m1 = static_cast<int>(rgb[1] * scl + 0.5);
    int m2 = static_cast<int>(rgb[2] * scl + 0.5);
    if (m0 > 255 || m1 > 255 || m2 > 255) {
        ++e;
        scl *= 0.5;
        m0 = static_cast<int>(rgb[0] * scl + 0.5);
        m1 = static_cast<int>(rgb[1] * scl + 0.5);
        m2 = static_cast<int>(rgb[2] * scl + 0.5);
    }
    if (e + 128 <= 0) {
        out4[0] = out4[1] = out4[2] = out4[3] = 0;
        return;
    }
    out4[0] = static_cast<std::uint8_t>(m0);
    out4[1] = static_cast<std::uint8_t>(m1);
    out4[2] = static_cast<std::uint8_t>(m2);
    out4[3] = static_cast<std::uint8_t>(e + 128);
}

void rgbe_decode(const std::uint8_t* in4, float* rgb) {
    if (in4[3] == 0) {
        rgb[0] = rgb[1] = rgb[2] = 0.0f;
        return;
    }
    const double f = std::ldexp(1.0, static_cast<int>(in4[3]) - 136);  // 2^(e-128)/256
    rgb[0] = static_cast<float>(in4[0] * f);
    rgb[1] = static_cast<float>(in4[1] * f);
    rgb[2] = static_cast<float>(in4[2] * f);
}

// canonical RLE for one component stream; runs >= 4, literal blocks <= 128
void rle_component(const std::uint8_t* s, std::int64_t w, std::vector<std::uint8_t>& out) {
    std::int64_t j = 0;
    while (j < w) {
        std::int64_t beg = j;
        std::int64_t run = 0;
        while (beg < w) {
            run = 1;
            while (run < 127 && beg + run < w && s[beg + run] == s[beg]) ++run;
            if (run >= 4) break;
            beg += run;
        }
        if (run < 4) beg = w;  // no run found; everything is literal
        while (j < beg) {
            const std::int64_t n = std::min<std::int64_t>(128, beg - j);
            out.push_back(static_cast<std::uint8_t>(n));
            out.insert(out.end(), s + j, s + j + n);
            j += n;
        }
        if (run >= 4 && beg < w) {
            out.push_back(static_cast<std::uint8_t>(128 + run));
            out.push_back(s[beg]);
            j = beg + run;
        }
    }
}

}  // namespace

Image read_rgbe(const std::vector<std::uint8_t>& bytes) {
    Cursor cur{bytes};
    const std::string magic = cur.line();
    if (magic.rfind("#?RADIANCE", 0) != 0)
        throw ParseError("missing #?RADIANCE header", 0);
    bool format_ok = false;
    for (;;) {
        const std::size_t at = cur.pos;
        const std::string l = cur.line();
        if (l.empty()) break;
        if (l[0] == '#') continue;
        if (l.rfind("FORMAT=", 0) == 0) {
            if (l != "FORMAT=32-bit_rle_rgbe")
                throw ParseError("unsupported format '" + l + "'", at);
            format_ok = true;
        }
        // EXPOSURE/GAMMA and other headers are carried but ignored
    }
    if (!format_ok) throw ParseError("missing FORMAT=32-bit_rle_rgbe", cur.pos);
    const std::size_t res_at = cur.pos;
    const std::string res = cur.line();
    std::int64_t h = 0, w = 0;
    if (std::sscanf(res.c_str(), "-Y %lld +X %lld", reinterpret_cast<long long*>(&h),
                    reinterpret_cast<long long*>(&w)) != 2 ||
        h <= 0 || w <= 0)
        throw ParseError("bad resolution line '" + res + "' (want -Y H +X W)", res_at);

    Image img(h, w, 3);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 4);
    for (std::int64_t r = 0; r < h; ++r) {
        const std::size_t row_at = cur.pos;
        std::uint8_t head[4];
        cur.bytes(head, 4);
        if (head[0] == 2 && head[1] == 2 && ((head[2] << 8) | head[3]) == w && w >= 8 &&
            w <= 32767) {
            // new-style: four RLE component streams
            for (int comp = 0; comp < 4; ++comp) {
                std::int64_t x = 0;
                while (x < w) {
                    const std::uint8_t code = cur.byte();
                    if (code > 128) {
                        const int n = code - 128;
                        if (x + n > w) throw ParseError("RLE run overflows scanline", cur.pos - 1);
                        const std::uint8_t val = cur.byte();
                        for (int i = 0; i < n; ++i) row[static_cast<std::size_t>((x + i) * 4 + comp)] = val;
                        x += n;
                    } else if (code > 0) {
                        if (x + code > w) throw ParseError("RLE literal overflows scanline", cur.pos - 1);
                        for (int i = 0; i < code; ++i)
                            row[static_cast<std::size_t>((x + i) * 4 + comp)] = cur.byte();
                        x += code;
                    } else {
                        throw ParseError("zero RLE code", cur.pos - 1);
                    }
                }
            }
        } else {
            // flat scanline, with the old (1,1,1,count) repeat convention
            row[0] = head[0];
            row[1] = head[1];
            row[2] = head[2];
            row[3] = head[3];
            std::int64_t x = 1;
            int rshift = 0;
            while (x < w) {
                std::uint8_t px[4];
                cur.bytes(px, 4);
                if (px[0] == 1 && px[1] == 1 && px[2] == 1) {
                    if (x == 0) throw ParseError("repeat code with no previous pixel", row_at);
                    const std::int64_t n = static_cast<std::int64_t>(px[3]) << rshift;
                    if (x + n > w) throw ParseError("old-style repeat overflows scanline", cur.pos - 4);
                    for (std::int64_t i = 0; i < n; ++i)
                        std::memcpy(&row[static_cast<std::size_t>((x + i) * 4)],
                                    &row[static_cast<std::size_t>((x - 1) * 4)], 4);
                    x += n;
                    rshift += 8;
                } else {
                    std::memcpy(&row[static_cast<std::size_t>(x * 4)], px, 4);
                    ++x;
                    rshift = 0;
                }
            }
        }
        for (std::int64_t c = 0; c < w; ++c)
            rgbe_decode(&row[static_cast<std::size_t>(c * 4)], img.px(r, c));
    }
    return img;
}

std::vector<std::uint8_t> write_rgbe(const Image& img) {
    if (img.c != 3) throw std::invalid_argument("write_rgbe: need 3 channels, got " + std::to_string(img.c));
    std::vector<std::uint8_t> out;
    put(out, "#?RADIANCE\n");
    put(out, "FORMAT=32-bit_rle_rgbe\n");
    put(out, "\n");
    put(out, "-Y " + std::to_string(img.h) + " +X " + std::to_string(img.w) + "\n");

    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.w) * 4);
    std::vector<std::uint8_t> comp(static_cast<std::size_t>(img.w));
    const bool rle = img.w >= 8 && img.w <= 32767;
    for (std::int64_t r = 0; r < img.h; ++r) {
        for (std::int64_t c = 0; c < img.w; ++c)
            rgbe_encode(img.px(r, c), &row[static_cast<std::size_t>(c * 4)]);
        if (rle) {
            out.push_back(2);
            out.push_back(2);
            out.push_back(static_cast<std::uint8_t>(img.w >> 8));
            out.push_back(static_cast<std::uint8_t>(img.w & 0xff));
            for (int k = 0; k < 4; ++k) {
                for (std::int64_t c = 0; c < img.w; ++c)
                    comp[static_cast<std::size_t>(c)] = row[static_cast<std::size_t>(c * 4 + k)];
                rle_component(comp.data(), img.w, out);
            }
        } else {
            out.insert(out.end(), row.begin(), row.end());
        }
    }
    return out;
}

// ---- PFM ----

namespace {
bool host_little_endian() {
    const std::uint16_t x = 1;
    return *reinterpret_cast<const std::uint8_t*>(&x) == 1;
}
}  // namespace

Image read_pfm(const std::vector<std::uint8_t>& bytes) {
    Cursor cur{bytes};
    const std::string magic = cur.line();
    std::int64_t c;
    if (magic == "PF")
        c = 3;
    else if (magic == "Pf")
        c = 1;
    else
        throw ParseError("bad PFM magic '" + magic + "'", 0);
    const std::size_t dim_at = cur.pos;
    const std::string dims = cur.line();
    std::int64_t w = 0, h = 0;
    if (std::sscanf(dims.c_str(), "%lld %lld", reinterpret_cast<long long*>(&w),
                    reinterpret_cast<long long*>(&h)) != 2 ||
        w <= 0 || h <= 0)
        throw ParseError("bad PFM dimensions '" + dims + "'", dim_at);
    const std::size_t scale_at = cur.pos;
    const double scl = std::atof(cur.line().c_str());
    if (scl == 0.0) throw ParseError("bad PFM scale", scale_at);
    const bool file_le = scl < 0.0;

    Image img(h, w, c);
    std::vector<std::uint8_t> rowbuf(static_cast<std::size_t>(w * c) * 4);
    for (std::int64_t r = h - 1; r >= 0; --r) {  // PFM rows run bottom to top
        cur.bytes(rowbuf.data(), rowbuf.size());
        if (file_le != host_little_endian())
            for (std::size_t i = 0; i < rowbuf.size(); i += 4) {
                std::swap(rowbuf[i], rowbuf[i + 3]);
                std::swap(rowbuf[i + 1], rowbuf[i + 2]);
            }
        std::memcpy(img.px(r, 0), rowbuf.data(), rowbuf.size());
    }
    for (std::size_t i = 0; i < img.data.size(); ++i)
        if (std::isnan(img.data[i])) throw ParseError("NaN payload rejected", 0);
    return img;
}

std::vector<std::uint8_t> write_pfm(const Image& img) {
    if (img.c != 3 && img.c != 1)
        throw std::invalid_argument("write_pfm: need 1 or 3 channels, got " + std::to_string(img.c));
    std::vector<std::uint8_t> out;
    put(out, img.c == 3 ? "PF\n" : "Pf\n");
    put(out, std::to_string(img.w) + " " + std::to_string(img.h) + "\n");
    put(out, host_little_endian() ? "-1.000000\n" : "1.000000\n");
    for (std::int64_t r = img.h - 1; r >= 0; --r) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(img.px(r, 0));
        out.insert(out.end(), p, p + static_cast<std::size_t>(img.w * img.c) * 4);
    }
    return out;
}

// ---- PPM ----

Image read_ppm(const std::vector<std::uint8_t>& bytes) {
    Cursor cur{bytes};
    // token scanner that skips whitespace and # comments
    auto token = [&]() {
        std::string t;
        for (;;) {
            const std::uint8_t ch = cur.byte();
            if (ch == '#') {
                while (cur.byte() != '\n') {
                }
                continue;
            }
            if (std::isspace(ch)) {
                if (!t.empty()) return t;
                continue;
            }
            t.push_back(static_cast<char>(ch));
        }
    };
    if (token() != "P6") throw ParseError("bad PPM magic", 0);
    const std::int64_t w = std::atoll(token().c_str());
    const std::int64_t h = std::atoll(token().c_str());
    const std::int64_t maxv = std::atoll(token().c_str());
    if (w <= 0 || h <= 0 || maxv != 255) throw ParseError("unsupported PPM geometry", cur.pos);
    Image img(h, w, 3);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(w * h * 3));
    cur.bytes(buf.data(), buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        img.data[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

std::vector<std::uint8_t> write_ppm(const Image& img) {
    if (img.c != 3) throw std::invalid_argument("write_ppm: need 3 channels, got " + std::to_string(img.c));
    std::vector<std::uint8_t> out;
    put(out, "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n");
    out.reserve(out.size() + img.data.size());
    for (float v : img.data) {
        const int q = static_cast<int>(std::lround(static_cast<double>(v) * 255.0));
        out.push_back(static_cast<std::uint8_t>(std::clamp(q, 0, 255)));
    }
    return out;
}

// ---- files ----

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + path);
}

namespace {
std::string ext_of(const std::string& path) {
    const auto dot = path.find_last_of('.');
    return dot == std::string::npos ? "" : path.substr(dot);
}
}  // namespace

Image read_image(const std::string& path) {
    const std::string e = ext_of(path);
    const auto bytes = read_file(path);
    if (e == ".hdr") return read_rgbe(bytes);
    if (e == ".pfm") return read_pfm(bytes);
    if (e == ".ppm") return read_ppm(bytes);
    throw std::runtime_error("unsupported image extension '" + e + "'");
}

void write_image(const std::string& path, const Image& img) {
    const std::string e = ext_of(path);
    if (e == ".hdr")
        write_file(path, write_rgbe(img));
    else if (e == ".pfm")
        write_file(path, write_pfm(img));
    else if (e == ".ppm")
        write_file(path, write_ppm(img));
    else
        throw std::runtime_error("unsupported image extension '" + e + "'");
}

// ---- value-domain mapping ----

ErpImage compress_hdr(const ErpImage& hdr) {
    if (hdr.domain != Domain::HdrLinear)
        throw std::invalid_argument(std::string("compress_hdr: expected hdr_linear input, got ") +
                                    domain_name(hdr.domain));
    const double ceiling = std::pow(2.0, kHdrGamma);
    ErpImage out(hdr.h(), hdr.w(), hdr.c(), Domain::HdrCompressed);
    for (std::size_t i = 0; i < hdr.img.data.size(); ++i) {
        const double v = hdr.img.data[i];
        if (v < 0.0) throw std::invalid_argument("compress_hdr: negative radiance");
        out.img.data[i] = static_cast<float>(std::pow(std::min(v, ceiling), 1.0 / kHdrGamma));
    }
    return out;
}

ErpImage expand_hdr(const ErpImage& compressed) {
    if (compressed.domain != Domain::HdrCompressed)
        throw std::invalid_argument(std::string("expand_hdr: expected hdr_compressed input, got ") +
                                    domain_name(compressed.domain));
    ErpImage out(compressed.h(), compressed.w(), compressed.c(), Domain::HdrLinear);
    for (std::size_t i = 0; i < compressed.img.data.size(); ++i) {
        const double v = std::clamp<double>(compressed.img.data[i], 0.0, 2.0);
        out.img.data[i] = static_cast<float>(std::pow(v, kHdrGamma));
    }
    return out;
}

ErpImage apply_dataset_scale(const ErpImage& hdr, double factor) {
    ErpImage out = hdr;
    for (auto& v : out.img.data) v = static_cast<float>(v * factor);
    return out;
}

Image tonemap_for_metrics(const Image& linear) {
    Image out(linear.h, linear.w, linear.c);
    for (std::size_t i = 0; i < linear.data.size(); ++i) {
        const double x = std::max(0.0, static_cast<double>(linear.data[i]));
        const double t = std::pow(x / (1.0 + x), 1.0 / 2.2);
        out.data[i] = static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
    return out;
}

ErpImage tonemap_for_metrics(const ErpImage& hdr) {
    return ErpImage(tonemap_for_metrics(hdr.img), Domain::Ldr01);
}

}  // namespace pano::io
