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

#include "pano/ibl.hpp"
#include "pano/image_io.hpp"
#include "pano/rng.hpp"
#include "pano/synth.hpp"

using namespace pano;
using namespace pano::ibl;

namespace {
constexpr double kPi = 3.14159265358979323846;

ErpImage uniform_env(std::int64_t h, float value = 1.0f) {
    ErpImage env(h, 2 * h, 3, Domain::HdrLinear);
    std::fill(env.img.data.begin(), env.img.data.end(), value);
    return env;
}
}  // namespace

TEST_CASE("uniform unit environment integrates to pi for any normal") {
    const ErpImage env = uniform_env(64);
    for (auto n : {erp::Vec3{0, 0, 1}, erp::Vec3{1, 0, 0}, erp::normalized({1, 1, 0.5})}) {
        const Rgb e = diffuse_irradiance(env, n);
        for (double v : e) CHECK(std::abs(v - kPi) < 0.01 * kPi);
    }
}

TEST_CASE("single-texel environment reproduces the one-term sum") {
    ErpImage env(32, 64, 3, Domain::HdrLinear);
    const std::int64_t r = 10, c = 20;
    env.img.at(r, c, 0) = env.img.at(r, c, 1) = env.img.at(r, c, 2) = 1.0f;
    const erp::Vec3 d = erp::pix_to_dir(r, c, 32, 64);
    const double sa = erp::solid_angle(r, 32, 64);
    for (auto n : {erp::Vec3{0, 0, 1}, erp::normalized({1, 0.3, 0.2}), erp::Vec3{0, 0, -1}}) {
        const Rgb e = diffuse_irradiance(env, n);
        const double expect = std::max(0.0, erp::dot(n, d)) * sa;
        CHECK(e[0] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("irradiance at the pole normal is invariant to yaw rolls") {
    const synth::SceneParams p = synth::SceneParams::random(5, 32, 64);
    const ErpImage env = synth::gen_panorama(p, 32, 64);
    const Rgb base = diffuse_irradiance(env, {0, 0, 1});
    for (std::int64_t dc : {7, 19, 32}) {
        const Rgb rolled = diffuse_irradiance(erp::yaw_roll(env, dc), {0, 0, 1});
        CHECK(rolled[0] == doctest::Approx(base[0]).epsilon(1e-9));
        CHECK(rolled[2] == doctest::Approx(base[2]).epsilon(1e-9));
    }
}

TEST_CASE("irradiance is linear in the environment") {
    const synth::SceneParams pa = synth::SceneParams::random(6, 16, 32);
    const synth::SceneParams pb = synth::SceneParams::random(7, 16, 32);
    const ErpImage a = synth::gen_panorama(pa, 16, 32);
    const ErpImage b = synth::gen_panorama(pb, 16, 32);
    ErpImage mix(16, 32, 3, Domain::HdrLinear);
    for (std::size_t i = 0; i < mix.img.data.size(); ++i)
        mix.img.data[i] = 0.3f * a.img.data[i] + 1.7f * b.img.data[i];
    const erp::Vec3 n = erp::normalized({0.5, -0.2, 0.8});
    const Rgb ea = diffuse_irradiance(a, n);
    const Rgb eb = diffuse_irradiance(b, n);
    const Rgb em = diffuse_irradiance(mix, n);
    for (int ch = 0; ch < 3; ++ch)
        CHECK(em[static_cast<std::size_t>(ch)] ==
              doctest::Approx(0.3 * ea[static_cast<std::size_t>(ch)] + 1.7 * eb[static_cast<std::size_t>(ch)])
                  .epsilon(1e-5));
}

TEST_CASE("doubling the environment resolution barely moves the quadrature") {
    const Rgb lo = diffuse_irradiance(uniform_env(32), {0, 0, 1});
    const Rgb hi = diffuse_irradiance(uniform_env(64), {0, 0, 1});
    CHECK(std::abs(hi[0] - lo[0]) < 0.003 * lo[0]);
}

TEST_CASE("probe render of a uniform environment is a flat field") {
    const ProbeRender r = render_probe_array(uniform_env(32));
    // every hit pixel carries E/pi = 1; compare sphere pixels to the ground
    float ground = r.linear.at(r.linear.h - 1, r.linear.w / 2, 0);
    CHECK(ground == doctest::Approx(1.0).epsilon(0.01));
    for (std::int64_t y = 0; y < r.linear.h; ++y)
        for (std::int64_t x = 0; x < r.linear.w; ++x) {
            const float v = r.linear.at(y, x, 0);
            if (v > 0.0f) CHECK(v == doctest::Approx(1.0).epsilon(0.015));
        }
}

TEST_CASE("top-lit delta light gives the analytic cosine lobe on a sphere") {
    ErpImage env(64, 128, 3, Domain::HdrLinear);
    // a small cap at the pole approximating a delta; total flux known
    for (std::int64_t c = 0; c < 128; ++c)
        env.img.at(0, c, 0) = env.img.at(0, c, 1) = env.img.at(0, c, 2) = 1.0f;
    double cap = 128.0 * erp::solid_angle(0, 64, 128);

    // direct irradiance comparison over sphere normals
    for (auto n : {erp::Vec3{0, 0, 1}, erp::normalized({1, 0, 1}), erp::Vec3{1, 0, 0}}) {
        const Rgb e = diffuse_irradiance(env, n);
        // light arrives from very near the pole; cos factor ~ n.z
        const double expect = std::max(0.0, n.z) * cap;
        CHECK(std::abs(e[0] - expect) <= 0.02 * cap + 1e-12);
    }
}

TEST_CASE("yaw-180 environments render mirrored images when the light is y-symmetric") {
    // environment symmetric under y -> -y: irradiance then satisfies
    // E(R180 n) = E(mirror_x n), which makes the render an exact x-mirror
    ErpImage env(32, 64, 3, Domain::HdrLinear);
    for (std::int64_t r = 0; r < 32; ++r)
        for (std::int64_t c = 0; c < 64; ++c) {
            const erp::Vec3 d = erp::pix_to_dir(r, c, 32, 64);
            const float v = static_cast<float>(0.4 + 0.3 * d.x + 0.25 * d.z + 0.2 * std::abs(d.y));
            env.img.at(r, c, 0) = v;
            env.img.at(r, c, 1) = 0.7f * v;
            env.img.at(r, c, 2) = 0.4f * v;
        }
    const ProbeRender a = render_probe_array(env);
    const ProbeRender b = render_probe_array(erp::yaw_roll(env, 32));
    double worst = 0;
    for (std::int64_t y = 0; y < a.linear.h; ++y)
        for (std::int64_t x = 0; x < a.linear.w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                worst = std::max(worst, std::abs(static_cast<double>(a.linear.at(y, x, ch)) -
                                                 b.linear.at(y, a.linear.w - 1 - x, ch)));
    CHECK(worst < 0.02);
}

TEST_CASE("metric identities") {
    const synth::SceneParams p = synth::SceneParams::random(8, 32, 64);
    const ErpImage env = synth::gen_panorama(p, 32, 64);
    const ProbeRender r = render_probe_array(env);

    SUBCASE("identical renders: zero errors, capped psnr") {
        const MetricReport m = metrics(r, r);
        CHECK(m.rmse == 0.0);
        CHECK(m.si_rmse == 0.0);
        CHECK(m.rgb_angular_deg == 0.0);
        CHECK(m.psnr_db == 99.0);
    }

    SUBCASE("global scale on the linear prediction vanishes under si-RMSE") {
        ProbeRender scaled = r;
        for (auto& v : scaled.linear.data) v *= 2.0f;
        scaled.ldr = io::tonemap_for_metrics(scaled.linear);
        const MetricReport m = metrics(scaled, r);
        CHECK(m.si_rmse < 1e-6);
        CHECK(m.rmse > 0.0);
        // any positive scale gives the same si-RMSE
        ProbeRender half = r;
        for (auto& v : half.linear.data) v *= 0.37f;
        half.ldr = io::tonemap_for_metrics(half.linear);
        CHECK(metrics(half, r).si_rmse == doctest::Approx(m.si_rmse).epsilon(1e-6));
    }

    SUBCASE("single-pixel pure red vs pure green is 90 degrees") {
        ProbeRender a, b;
        a.linear = Image(1, 1, 3);
        b.linear = Image(1, 1, 3);
        a.ldr = Image(1, 1, 3);
        b.ldr = Image(1, 1, 3);
        a.ldr.data = {1, 0, 0};
        b.ldr.data = {0, 1, 0};
        a.linear.data = {1, 0, 0};
        b.linear.data = {0, 1, 0};
        CHECK(metrics(a, b).rgb_angular_deg == doctest::Approx(90.0).epsilon(1e-9));
    }

    SUBCASE("rmse, psnr and the angle are symmetric in their arguments") {
        const synth::SceneParams p2 = synth::SceneParams::random(9, 32, 64);
        const ProbeRender r2 = render_probe_array(synth::gen_panorama(p2, 32, 64));
        const MetricReport ab = metrics(r, r2);
        const MetricReport ba = metrics(r2, r);
        CHECK(ab.rmse == doctest::Approx(ba.rmse).epsilon(1e-12));
        CHECK(ab.psnr_db == doctest::Approx(ba.psnr_db).epsilon(1e-12));
        CHECK(ab.rgb_angular_deg == doctest::Approx(ba.rgb_angular_deg).epsilon(1e-9));
    }

    SUBCASE("mismatched rasters are rejected") {
        ProbeRender other;
        other.linear = Image(4, 4, 3);
        other.ldr = Image(4, 4, 3);
        CHECK_THROWS_AS(metrics(r, other), std::invalid_argument);
    }
}

TEST_CASE("evaluation protocol: crop counts and oracle models") {
    CHECK(protocol_views(EvalMode::Indoor).size() == 10);
    CHECK(protocol_views(EvalMode::Outdoor).size() == 3);
    for (const auto& [yaw, fov] : protocol_views(EvalMode::Outdoor)) CHECK(fov == 90.0);
    CHECK(protocol_views(EvalMode::Indoor)[3].first == doctest::Approx(108.0));

    std::vector<ErpImage> panos;
    for (int i = 0; i < 3; ++i)
        panos.push_back(synth::gen_panorama(synth::SceneParams::random(100 + i, 32, 64), 32, 64));

    SUBCASE("identity model scores zero everywhere") {
        const EvalResult res = eval_protocol(identity_model(), panos, EvalMode::Outdoor);
        CHECK(res.crops_per_pano == 3);
        CHECK(res.aggregate.rmse == 0.0);
        CHECK(res.aggregate.si_rmse == 0.0);
        CHECK(res.aggregate.rgb_angular_deg == 0.0);
        CHECK(res.aggregate.psnr_db == 99.0);
    }

    SUBCASE("constant-black model stays finite") {
        EvalModel black = [](const EvalInput& in) {
            return ErpImage(in.gt_linear->h(), in.gt_linear->w(), 3, Domain::HdrLinear);
        };
        const EvalResult res = eval_protocol(black, panos, EvalMode::Outdoor);
        CHECK(std::isfinite(res.aggregate.psnr_db));
        CHECK(res.aggregate.psnr_db < 99.0);
        CHECK(res.aggregate.rmse > 0.0);
    }

    SUBCASE("parallel evaluation matches serial") {
        const EvalResult serial = eval_protocol(identity_model(), panos, EvalMode::Outdoor, 1);
        const EvalResult parallel = eval_protocol(identity_model(), panos, EvalMode::Outdoor, 2);
        CHECK(serial.aggregate.rmse == parallel.aggregate.rmse);
        CHECK(serial.per_item.size() == parallel.per_item.size());
    }
}
