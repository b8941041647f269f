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

#include "pano/network.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pano::net {

void GeneratorConfig::validate() const {
    if (in_w != 2 * in_h)
        throw std::invalid_argument("generator config: width " + std::to_string(in_w) +
                                    " must be twice height " + std::to_string(in_h));
    if (patch != 4) throw std::invalid_argument("generator config: patch size must be 4");
    if (in_h % patch != 0) throw std::invalid_argument("generator config: height not divisible by patch");
    if (depths.empty()) throw std::invalid_argument("generator config: no stages");
    if (grid_h(stages()) < 1)
        throw std::invalid_argument("generator config: too many stages for input " +
                                    std::to_string(in_h) + "x" + std::to_string(in_w));
    for (std::int64_t i = 0; i <= stages(); ++i) {
        const std::int64_t gh = grid_h(i), gw = grid_w(i);
        const std::int64_t ws = i < stages() ? stage_window(i) : bottleneck_window();
        if (gh % ws != 0 || gw % ws != 0)
            throw std::invalid_argument("generator config: window " + std::to_string(ws) +
                                        " does not tile stage grid " + std::to_string(gh) + "x" +
                                        std::to_string(gw));
        if (ws > 1 && (gw / 2) % ws != 0)
            throw std::invalid_argument("generator config: window " + std::to_string(ws) +
                                        " incompatible with pano caps at stage " + std::to_string(i));
    }
}

std::string GeneratorConfig::describe() const {
    std::ostringstream os;
    os << "input " << in_h << "x" << in_w << ", patch " << patch << ", C " << base_channels
       << ", depths [";
    for (std::size_t i = 0; i < depths.size(); ++i) os << (i ? "," : "") << depths[i];
    os << "], bottleneck " << bottleneck_depth << ", window " << window << ", variant "
       << (variant == attn::Variant::Pano ? "pano" : "swin");
    return os.str();
}

std::vector<std::pair<std::int64_t, std::int64_t>> stage_grids(const GeneratorConfig& cfg) {
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    for (std::int64_t i = 0; i <= cfg.stages(); ++i) out.emplace_back(cfg.grid_h(i), cfg.grid_w(i));
    return out;
}

GeneratorConfig sweep_to_param_target(GeneratorConfig base, std::int64_t target, std::int64_t c_lo,
                                      std::int64_t c_hi) {
    GeneratorConfig best = base;
    std::int64_t best_err = -1;
    for (std::int64_t c = c_lo; c <= c_hi; c += 8) {
        GeneratorConfig cand = base;
        cand.base_channels = c;
        const std::int64_t err = std::abs(expected_param_count(cand) - target);
        if (best_err < 0 || err < best_err) {
            best_err = err;
            best = cand;
        }
    }
    return best;
}

std::map<std::string, std::string> config_to_map(const GeneratorConfig& cfg) {
    std::map<std::string, std::string> kv;
    kv["in_h"] = std::to_string(cfg.in_h);
    kv["in_w"] = std::to_string(cfg.in_w);
    kv["patch"] = std::to_string(cfg.patch);
    std::string d;
    for (std::size_t i = 0; i < cfg.depths.size(); ++i)
        d += (i ? "," : "") + std::to_string(cfg.depths[i]);
    kv["depths"] = d;
    kv["bottleneck_depth"] = std::to_string(cfg.bottleneck_depth);
    kv["base_channels"] = std::to_string(cfg.base_channels);
    kv["window"] = std::to_string(cfg.window);
    kv["head_dim"] = std::to_string(cfg.head_dim);
    kv["variant"] = cfg.variant == attn::Variant::Pano ? "pano" : "swin";
    kv["rel_pos_bias"] = cfg.rel_pos_bias ? "1" : "0";
    kv["padding"] = cfg.padding == ConvPadding::Erp ? "erp" : "zero";
    kv["use_pam"] = cfg.use_pam ? "1" : "0";
    return kv;
}

GeneratorConfig config_from_map(const std::map<std::string, std::string>& kv) {
    GeneratorConfig cfg;
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error("config: missing key '" + key + "'");
        return it->second;
    };
    for (const auto& [key, val] : kv) {
        if (key == "in_h") cfg.in_h = std::stoll(val);
        else if (key == "in_w") cfg.in_w = std::stoll(val);
        else if (key == "patch") cfg.patch = std::stoll(val);
        else if (key == "depths") {
            cfg.depths.clear();
            std::stringstream ss(val);
            std::string item;
            while (std::getline(ss, item, ',')) cfg.depths.push_back(std::stoll(item));
        } else if (key == "bottleneck_depth") cfg.bottleneck_depth = std::stoll(val);
        else if (key == "base_channels") cfg.base_channels = std::stoll(val);
        else if (key == "window") cfg.window = std::stoll(val);
        else if (key == "head_dim") cfg.head_dim = std::stoll(val);
        else if (key == "variant") {
            if (val == "pano") cfg.variant = attn::Variant::Pano;
            else if (val == "swin") cfg.variant = attn::Variant::Swin;
            else throw std::runtime_error("config: unknown variant '" + val + "'");
        } else if (key == "rel_pos_bias") cfg.rel_pos_bias = val == "1";
        else if (key == "padding") {
            if (val == "erp") cfg.padding = ConvPadding::Erp;
            else if (val == "zero") cfg.padding = ConvPadding::Zero;
            else throw std::runtime_error("config: unknown padding '" + val + "'");
        } else if (key == "use_pam") cfg.use_pam = val == "1";
        else throw std::runtime_error("config: unknown key '" + key + "'");
    }
    (void)get;
    cfg.validate();
    return cfg;
}

// ---- checkpoint container ----

namespace {

constexpr char kMagic[8] = {'P', 'A', 'N', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc32_update(std::uint32_t crc, const std::uint8_t* data, std::size_t n) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

struct Writer {
    std::vector<std::uint8_t> buf;
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
};

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;
    void bytes(void* p, std::size_t n) {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
               static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | static_cast<std::uint64_t>(u32()) << 32;
    }
    std::string str() {
        const std::uint32_t n = u32();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    Writer w;
    w.bytes(kMagic, 8);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(ck.config.size()));
    for (const auto& [k, v] : ck.config) {
        w.str(k);
        w.str(v);
    }
    w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) w.u64(static_cast<std::uint64_t>(d));
        static_assert(sizeof(float) == 4);
        w.bytes(t.v.data(), t.v.size() * 4);  // little-endian floats
    }
    w.u32(crc32_update(0, w.buf.data(), w.buf.size()));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!f) throw std::runtime_error("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> buf(std::istreambuf_iterator<char>(f), {});
    if (buf.size() < 16) throw std::runtime_error("checkpoint: too short");
    const std::uint32_t stored = static_cast<std::uint32_t>(buf[buf.size() - 4]) |
                                 static_cast<std::uint32_t>(buf[buf.size() - 3]) << 8 |
                                 static_cast<std::uint32_t>(buf[buf.size() - 2]) << 16 |
                                 static_cast<std::uint32_t>(buf[buf.size() - 1]) << 24;
    if (crc32_update(0, buf.data(), buf.size() - 4) != stored)
        throw std::runtime_error("checkpoint: checksum mismatch");
    Reader r{buf};
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic");
    if (r.u32() != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    Checkpoint ck;
    const std::uint32_t nc = r.u32();
    for (std::uint32_t i = 0; i < nc; ++i) {
        std::string k = r.str();
        ck.config[k] = r.str();
    }
    const std::uint32_t nt = r.u32();
    for (std::uint32_t i = 0; i < nt; ++i) {
        const std::string name = r.str();
        const std::uint32_t nd = r.u32();
        Shape shape(nd);
        for (auto& d : shape) d = static_cast<std::int64_t>(r.u64());
        Tensor<float> t(shape);
        r.bytes(t.v.data(), t.v.size() * 4);
        ck.tensors.emplace(name, std::move(t));
    }
    return ck;
}

}  // namespace pano::net
