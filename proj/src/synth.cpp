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

#include "pano/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pano/erp.hpp"
#include "pano/image_io.hpp"
#include "pano/rng.hpp"
#include "pano/threadpool.hpp"

namespace pano::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kRadianceCeiling = 97.005859375;  // just under 2^6.6
}  // namespace

SceneParams SceneParams::random(std::uint64_t seed, std::int64_t h, std::int64_t w) {
    Rng rng(seed);
    SceneParams p;
    p.seed = seed;
    p.sun_colat_deg = rng.uniform(10, 80);
    p.sun_lon_deg = rng.uniform(-180, 180);
    p.sun_radiance = rng.uniform(5, 90);
    for (int c = 0; c < 3; ++c) {
        p.zenith[c] = static_cast<float>(rng.uniform(0.1, 0.5));
        p.horizon[c] = static_cast<float>(rng.uniform(0.4, 1.2));
        p.ground_a[c] = static_cast<float>(rng.uniform(0.15, 0.6));
        p.ground_b[c] = static_cast<float>(rng.uniform(0.05, 0.3));
    }
    p.checker_deg = rng.uniform(8, 25);
    const auto nboxes = rng.index(5);
    for (std::uint64_t b = 0; b < nboxes; ++b) {
        BoxParams box{};
        const auto r0 = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(h / 2)));
        const auto c0 = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(w)));
        box.r0 = r0;
        box.r1 = std::min<std::int64_t>(
            h - 1, r0 + 2 + static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(h / 4))));
        box.c0 = c0;
        box.c1 = std::min<std::int64_t>(
            w - 1, c0 + 2 + static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(w / 4))));
        for (int c = 0; c < 3; ++c) box.color[c] = static_cast<float>(rng.uniform(0.2, 1.5));
        p.boxes.push_back(box);
    }
    return p;
}

ErpImage gen_panorama(const SceneParams& p, std::int64_t h, std::int64_t w) {
    if (p.sun_radiance < 0 || p.sun_radiance > kRadianceCeiling)
        throw std::invalid_argument("scene: sun radiance outside the compressed-domain ceiling");
    ErpImage img(h, w, 3, Domain::HdrLinear);
    const erp::Vec3 sun =
        erp::coord_to_dir(p.sun_colat_deg / 180.0 * static_cast<double>(h),
                          (p.sun_lon_deg + 180.0) / 360.0 * static_cast<double>(w), h, w);
    const double sun_rad = p.sun_radius_deg * kPi / 180.0;
    const double checker = p.checker_deg * kPi / 180.0;
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            const erp::Vec3 d = erp::pix_to_dir(r, c, h, w);
            float* px = img.img.px(r, c);
            if (d.z >= 0) {
                for (int ch = 0; ch < 3; ++ch)
                    px[ch] = static_cast<float>(p.horizon[ch] + (p.zenith[ch] - p.horizon[ch]) * d.z);
            } else {
                const double theta = std::acos(std::clamp(d.z, -1.0, 1.0));
                const double phi = std::atan2(d.y, d.x) + kPi;
                const std::int64_t cell = static_cast<std::int64_t>(std::floor(phi / checker)) +
                                          static_cast<std::int64_t>(std::floor((theta - kPi / 2) / checker));
                const float* ground = ((cell % 2 + 2) % 2 == 0) ? p.ground_a : p.ground_b;
                for (int ch = 0; ch < 3; ++ch) px[ch] = ground[ch];
            }
        }
    for (const auto& box : p.boxes)
        for (std::int64_t r = std::max<std::int64_t>(0, box.r0); r <= box.r1 && r < h; ++r)
            for (std::int64_t c = std::max<std::int64_t>(0, box.c0); c <= box.c1 && c < w; ++c)
                for (int ch = 0; ch < 3; ++ch) img.img.at(r, c, ch) = box.color[ch];
    // sun disk last so its texel radiance is exactly the parameter value
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c)
            if (erp::geodesic(erp::pix_to_dir(r, c, h, w), sun) <= sun_rad) {
                float* px = img.img.px(r, c);
                px[0] = px[1] = px[2] = static_cast<float>(p.sun_radiance);
            }
    return img;
}

std::vector<AugmentSpec> augment_specs(std::uint64_t seed) {
    Rng rng(seed);
    std::array<double, 9> lattice{};
    for (int i = 0; i < 9; ++i) lattice[static_cast<std::size_t>(i)] = 20.0 + 40.0 * i;  // 20..340
    // Fisher-Yates, keep the first eight: distinct draws without replacement
    for (int i = 8; i > 0; --i)
        std::swap(lattice[static_cast<std::size_t>(i)],
                  lattice[rng.index(static_cast<std::uint64_t>(i + 1))]);
    std::vector<AugmentSpec> specs;
    for (int i = 0; i < 8; ++i)
        specs.push_back({lattice[static_cast<std::size_t>(i)], rng.uniform() < 0.2});
    return specs;
}

ErpImage apply_augment(const ErpImage& pano, const AugmentSpec& spec) {
    const std::int64_t dc =
        static_cast<std::int64_t>(std::llround(spec.yaw_deg / 360.0 * static_cast<double>(pano.w())));
    ErpImage out = erp::yaw_roll(pano, dc);
    if (spec.vflip) out = erp::vflip(out);
    return out;
}

TrainingPair make_training_pair(const ErpImage& pano_linear, double fov_deg, double yaw_deg,
                                std::int64_t crop_size) {
    if (pano_linear.domain != Domain::HdrLinear)
        throw std::invalid_argument("make_training_pair: panorama must be hdr_linear");
    TrainingPair pair;
    pair.fov_deg = fov_deg;
    const ErpImage ldr = io::tonemap_for_metrics(pano_linear);
    const Image crop = erp::erp_to_perspective(ldr, fov_deg, yaw_deg, 0.0, crop_size, crop_size);
    auto masked = erp::perspective_to_erp(crop, fov_deg, yaw_deg, 0.0, pano_linear.h(),
                                          pano_linear.w(), Domain::Ldr01);
    // off-mask pixels are exactly zero by construction
    pair.input_ldr = std::move(masked.image);
    pair.mask = std::move(masked.mask);

    ErpImage clipped = pano_linear;
    for (auto& v : clipped.img.data) v = std::min(v, static_cast<float>(kRadianceCeiling));
    pair.gt_compressed = io::compress_hdr(clipped);
    return pair;
}

void split_dataset(Manifest& manifest, std::uint64_t seed) {
    const std::size_t n = manifest.scenes.size();
    if (n == 0) return;
    std::size_t n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * 0.01));
    n_test = std::max<std::size_t>(1, std::min(n_test, n - 1));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x5954));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
    for (auto& s : manifest.scenes) s.test = false;
    for (std::size_t i = 0; i < n_test; ++i) manifest.scenes[order[i]].test = true;
}

namespace {

json params_to_json(const SceneParams& p) {
    json j;
    j["seed"] = p.seed;
    j["sun_colat_deg"] = p.sun_colat_deg;
    j["sun_lon_deg"] = p.sun_lon_deg;
    j["sun_radiance"] = p.sun_radiance;
    j["sun_radius_deg"] = p.sun_radius_deg;
    j["zenith"] = {p.zenith[0], p.zenith[1], p.zenith[2]};
    j["horizon"] = {p.horizon[0], p.horizon[1], p.horizon[2]};
    j["ground_a"] = {p.ground_a[0], p.ground_a[1], p.ground_a[2]};
    j["ground_b"] = {p.ground_b[0], p.ground_b[1], p.ground_b[2]};
    j["checker_deg"] = p.checker_deg;
    json boxes = json::array();
    for (const auto& b : p.boxes)
        boxes.push_back({{"r0", b.r0},
                         {"r1", b.r1},
                         {"c0", b.c0},
                         {"c1", b.c1},
                         {"color", {b.color[0], b.color[1], b.color[2]}}});
    j["boxes"] = boxes;
    return j;
}

SceneParams params_from_json(const json& j) {
    SceneParams p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.sun_colat_deg = j.at("sun_colat_deg").get<double>();
    p.sun_lon_deg = j.at("sun_lon_deg").get<double>();
    p.sun_radiance = j.at("sun_radiance").get<double>();
    p.sun_radius_deg = j.at("sun_radius_deg").get<double>();
    for (std::size_t c = 0; c < 3; ++c) {
        p.zenith[c] = j.at("zenith")[c].get<float>();
        p.horizon[c] = j.at("horizon")[c].get<float>();
        p.ground_a[c] = j.at("ground_a")[c].get<float>();
        p.ground_b[c] = j.at("ground_b")[c].get<float>();
    }
    p.checker_deg = j.at("checker_deg").get<double>();
    p.boxes.clear();
    for (const auto& bj : j.at("boxes")) {
        BoxParams b{};
        b.r0 = bj.at("r0").get<std::int64_t>();
        b.r1 = bj.at("r1").get<std::int64_t>();
        b.c0 = bj.at("c0").get<std::int64_t>();
        b.c1 = bj.at("c1").get<std::int64_t>();
        for (std::size_t c = 0; c < 3; ++c) b.color[c] = bj.at("color")[c].get<float>();
        p.boxes.push_back(b);
    }
    return p;
}

}  // namespace

void save_manifest(const std::string& dir, const Manifest& m) {
    json j;
    j["seed"] = m.seed;
    j["height"] = m.height;
    j["width"] = m.width;
    json scenes = json::array();
    for (const auto& s : m.scenes) {
        json augs = json::array();
        for (const auto& a : s.augs) augs.push_back({{"yaw_deg", a.yaw_deg}, {"vflip", a.vflip}});
        scenes.push_back({{"id", s.id},
                          {"split", s.test ? "test" : "train"},
                          {"params", params_to_json(s.params)},
                          {"augs", augs}});
    }
    j["scenes"] = scenes;
    std::ofstream f(dir + "/manifest.json", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + dir + "/manifest.json");
    f << j.dump(2) << "\n";
}

Manifest load_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot open " + dir + "/manifest.json");
    json j = json::parse(f);
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.height = j.at("height").get<std::int64_t>();
    m.width = j.at("width").get<std::int64_t>();
    for (const auto& sj : j.at("scenes")) {
        SceneEntry s;
        s.id = sj.at("id").get<std::string>();
        s.test = sj.at("split").get<std::string>() == "test";
        s.params = params_from_json(sj.at("params"));
        for (const auto& aj : sj.at("augs"))
            s.augs.push_back({aj.at("yaw_deg").get<double>(), aj.at("vflip").get<bool>()});
        m.scenes.push_back(std::move(s));
    }
    return m;
}

Manifest synth_dataset(const std::string& dir, std::int64_t scenes, std::uint64_t seed,
                       std::int64_t height, std::int64_t width, std::int64_t jobs) {
    Manifest m;
    m.seed = seed;
    m.height = height;
    m.width = width;
    for (std::int64_t i = 0; i < scenes; ++i) {
        SceneEntry s;
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04lld", static_cast<long long>(i));
        s.id = buf;
        s.params = SceneParams::random(derive_seed(seed, static_cast<std::uint64_t>(i)), height, width);
        s.augs = augment_specs(derive_seed(seed, 0x10000 + static_cast<std::uint64_t>(i)));
        m.scenes.push_back(std::move(s));
    }
    split_dataset(m, seed);

    fs::create_directories(dir + "/scenes");
    const auto write_scene = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& s = m.scenes[i];
            const std::string sdir = dir + "/scenes/" + s.id;
            fs::create_directories(sdir);
            const ErpImage pano = gen_panorama(s.params, height, width);
            io::write_file(sdir + "/pano.hdr", io::write_rgbe(pano.img));
            for (std::size_t k = 0; k < s.augs.size(); ++k) {
                const ErpImage aug = apply_augment(pano, s.augs[k]);
                io::write_file(sdir + "/aug_" + std::to_string(k) + ".hdr", io::write_rgbe(aug.img));
            }
        }
    };
    if (jobs > 1)
        ThreadPool::global().parallel_for(0, m.scenes.size(), write_scene);
    else
        write_scene(0, m.scenes.size());
    save_manifest(dir, m);
    return m;
}

SceneSet SceneSet::load(const std::string& dir, bool test_split) {
    SceneSet set;
    set.manifest_ = load_manifest(dir);
    for (std::size_t i = 0; i < set.manifest_.scenes.size(); ++i) {
        const auto& s = set.manifest_.scenes[i];
        if (s.test != test_split) continue;
        const Image raster = io::read_rgbe(io::read_file(dir + "/scenes/" + s.id + "/pano.hdr"));
        const std::size_t base_idx = set.base_.size();
        set.base_.emplace_back(raster, Domain::HdrLinear);
        set.items_.push_back({base_idx, std::nullopt});
        for (const auto& a : s.augs) set.items_.push_back({base_idx, a});
    }
    return set;
}

ErpImage SceneSet::panorama(std::size_t item) const {
    const Item& it = items_.at(item);
    if (!it.aug) return base_[it.scene];
    return apply_augment(base_[it.scene], *it.aug);
}

}  // namespace pano::synth
