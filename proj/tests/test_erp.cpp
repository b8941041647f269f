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

#include "pano/erp.hpp"
#include "pano/rng.hpp"

using namespace pano;
using namespace pano::erp;

namespace {

constexpr double kPi = 3.14159265358979323846;

// smooth low-frequency sphere function (order <= 2 harmonics)
double sh_value(Vec3 d) {
    return 0.55 + 0.20 * d.x + 0.15 * d.y + 0.18 * d.z + 0.10 * d.x * d.y +
           0.08 * (3.0 * d.z * d.z - 1.0) * 0.5 + 0.06 * d.x * d.z;
}

ErpImage sh_image(std::int64_t h, std::int64_t w) {
    ErpImage img(h, w, 1, Domain::HdrLinear);
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c)
            img.img.at(r, c, 0) = static_cast<float>(sh_value(pix_to_dir(r, c, h, w)));
    return img;
}

double max_abs_diff(const Image& a, const Image& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return m;
}

double energy(const Image& img) {
    double e = 0;
    for (float v : img.data) e += static_cast<double>(v) * v;
    return e;
}

}  // namespace

TEST_CASE("pixel centre angles follow the ERP parameterization") {
    // H=2, W=4, r=0, c=0: colatitude pi/4, longitude -3pi/4
    const Vec3 d = pix_to_dir(0, 0, 2, 4);
    const double theta = std::acos(d.z);
    const double phi = std::atan2(d.y, d.x);
    CHECK(theta == doctest::Approx(kPi / 4).epsilon(1e-12));
    CHECK(phi == doctest::Approx(-3 * kPi / 4).epsilon(1e-12));

    // north pole direction maps to the row-0 limit
    const auto [rc, cc] = dir_to_pix({0, 0, 1}, 2, 4);
    CHECK(rc == doctest::Approx(0.0));
    (void)cc;
}

TEST_CASE("dir_to_pix inverts pix_to_dir on 1000 random pixel centres") {
    Rng rng(77);
    const std::int64_t h = 64, w = 128;
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto r = static_cast<std::int64_t>(rng.index(h));
        const auto c = static_cast<std::int64_t>(rng.index(w));
        const auto [rc, cc] = dir_to_pix(pix_to_dir(r, c, h, w), h, w);
        worst = std::max(worst, std::abs(rc - (static_cast<double>(r) + 0.5)));
        worst = std::max(worst, std::abs(cc - (static_cast<double>(c) + 0.5)));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("yaw_roll is an exact, energy-preserving permutation") {
    Rng rng(5);
    ErpImage img(4, 8, 3, Domain::HdrLinear);
    for (auto& v : img.img.data) v = static_cast<float>(rng.uniform(0, 4));

    ErpImage twice = yaw_roll(yaw_roll(img, 4), 4);  // 180 + 180 degrees
    CHECK(twice.img.data == img.img.data);
    ErpImage full = yaw_roll(img, 8);
    CHECK(full.img.data == img.img.data);
    CHECK(energy(yaw_roll(img, 3).img) == doctest::Approx(energy(img.img)).epsilon(1e-12));
}

TEST_CASE("pitch_rotate composition, pole mapping and mean preservation") {
    const ErpImage img = sh_image(64, 128);

    SUBCASE("pitch 90 then -90 returns close to the original on smooth data") {
        const ErpImage once = pitch_rotate(img, 90.0, Sampling::Bilinear);
        const ErpImage back = pitch_rotate(once, -90.0, Sampling::Bilinear);
        float lo = 1e9f, hi = -1e9f;
        for (float v : img.img.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(max_abs_diff(back.img, img.img) < 0.02 * (hi - lo));
    }

    SUBCASE("the pixel nearest the north pole lands on the equator") {
        const Vec3 d = rotate_x(pix_to_dir(0, 0, 64, 128), kPi / 2);
        CHECK(std::abs(d.z) < 2.0 * kPi / 128.0);
    }

    SUBCASE("solid-angle-weighted mean is preserved within 1%") {
        const double before = weighted_mean(img);
        const double after = weighted_mean(pitch_rotate(img, 90.0, Sampling::Bilinear));
        CHECK(std::abs(after - before) < 0.01 * std::abs(before));
    }

    SUBCASE("pitch_rotate(0) is the identity for both sampling modes") {
        CHECK(max_abs_diff(pitch_rotate(img, 0.0, Sampling::Bilinear).img, img.img) < 1e-6);
        CHECK(pitch_rotate(img, 0.0, Sampling::Nearest).img.data == img.img.data);
    }
}

TEST_CASE("polar_extend implements the spherical continuation") {
    Rng rng(9);
    for (std::int64_t h : {8, 16, 64}) {
        const std::int64_t w = 2 * h;
        ErpImage img(h, w, 2, Domain::HdrLinear);
        for (auto& v : img.img.data) v = static_cast<float>(rng.uniform(0, 1));
        const std::int64_t k = h / 4;
        const Image ext = polar_extend(img.img, k);

        SUBCASE(("virtual row -1 equals row 0 rolled half a turn, H=" + std::to_string(h)).c_str()) {
            const Image rolled = yaw_roll_raster(img.img, w / 2);
            for (std::int64_t c = 0; c < w; ++c)
                for (std::int64_t ch = 0; ch < 2; ++ch)
                    CHECK(ext.at(k - 1, c, ch) == rolled.at(0, c, ch));
        }

        SUBCASE("geodesic adjacency across the pole boundary") {
            // centre of extended-row -1 pixel c vs row 0 pixel c: one pixel step
            for (std::int64_t c = 0; c < w; ++c) {
                const Vec3 below = pix_to_dir(0, c, h, w);
                const Vec3 above = pix_to_dir(0, (c + w / 2) % w, h, w);  // source of virtual row -1
                const double dist = geodesic(above, below);
                CHECK(std::abs(dist - kPi / static_cast<double>(h)) <= 0.1 * kPi / static_cast<double>(h));
            }
        }

        SUBCASE("extend then crop is the identity") {
            for (std::int64_t r = 0; r < h; ++r)
                for (std::int64_t c = 0; c < w; ++c)
                    for (std::int64_t ch = 0; ch < 2; ++ch)
                        CHECK(ext.at(k + r, c, ch) == img.img.at(r, c, ch));
        }
    }
    ErpImage small(8, 16, 1, Domain::HdrLinear);
    CHECK_THROWS_AS(polar_extend(small.img, 5), std::invalid_argument);
}

TEST_CASE("perspective back-projection covers the frustum") {
    SUBCASE("view-axis ERP pixel receives the crop centre value") {
        // H=15 rows puts pixel row 7 exactly on the equator; column 20 centre
        // sits at longitude 66 degrees
        const std::int64_t h = 15, w = 30;
        Image persp(65, 65, 1);
        for (std::int64_t r = 0; r < 65; ++r)
            for (std::int64_t c = 0; c < 65; ++c)
                persp.at(r, c, 0) = static_cast<float>(r * 1000 + c);
        const double yaw_deg = (20.5) * 360.0 / 30.0 - 180.0;
        const auto out = perspective_to_erp(persp, 90.0, yaw_deg, 0.0, h, w, Domain::Ldr01);
        CHECK(out.mask.at(7, 20, 0) == 1.0f);
        CHECK(out.image.img.at(7, 20, 0) == doctest::Approx(persp.at(32, 32, 0)).epsilon(1e-6));
    }

    SUBCASE("solid-angle-weighted mask fraction matches a Monte-Carlo frustum oracle") {
        const std::int64_t h = 256, w = 512;
        Image persp(64, 64, 1);
        const auto out = perspective_to_erp(persp, 90.0, 0.0, 0.0, h, w, Domain::Ldr01);
        double covered = 0;
        for (std::int64_t r = 0; r < h; ++r) {
            const double sa = solid_angle(r, h, w);
            for (std::int64_t c = 0; c < w; ++c)
                if (out.mask.at(r, c, 0) > 0.5f) covered += sa;
        }
        const double frac = covered / (4 * kPi);

        // Monte-Carlo estimate of the frustum solid angle
        const Camera cam = make_camera(90.0, 0.0, 0.0, 64, 64);
        Rng rng(1234);
        const int n = 2'000'000;
        std::int64_t inside = 0;
        for (int i = 0; i < n; ++i) {
            const double z = rng.uniform(-1.0, 1.0);
            const double phi = rng.uniform(-kPi, kPi);
            const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
            const Vec3 d{s * std::cos(phi), s * std::sin(phi), z};
            const double zc = dot(d, cam.forward);
            if (zc <= 0) continue;
            if (std::abs(dot(d, cam.right) / zc) <= cam.tan_x &&
                std::abs(dot(d, cam.up) / zc) <= cam.tan_y)
                ++inside;
        }
        const double mc = static_cast<double>(inside) / n;
        CHECK(std::abs(frac - mc) < 0.02 * mc);
    }

    SUBCASE("narrow-fov mask is contained in the wide-fov mask") {
        const std::int64_t h = 64, w = 128;
        Image persp(32, 32, 1);
        const auto narrow = perspective_to_erp(persp, 40.0, 25.0, 10.0, h, w, Domain::Ldr01);
        const auto wide = perspective_to_erp(persp, 120.0, 25.0, 10.0, h, w, Domain::Ldr01);
        for (std::int64_t r = 0; r < h; ++r)
            for (std::int64_t c = 0; c < w; ++c)
                if (narrow.mask.at(r, c, 0) > 0.5f) CHECK(wide.mask.at(r, c, 0) == 1.0f);
    }

    CHECK_THROWS_AS(make_camera(0.0, 0, 0, 8, 8), std::invalid_argument);
    CHECK_THROWS_AS(make_camera(180.0, 0, 0, 8, 8), std::invalid_argument);
}

TEST_CASE("erp <-> perspective round trip") {
    const ErpImage img = sh_image(64, 128);

    SUBCASE("re-projected crop matches the source inside the mask") {
        const Image crop = erp_to_perspective(img, 70.0, 30.0, 10.0, 64, 64);
        const auto back = perspective_to_erp(crop, 70.0, 30.0, 10.0, 64, 128, img.domain);
        double worst = 0;
        for (std::int64_t r = 0; r < 64; ++r)
            for (std::int64_t c = 0; c < 128; ++c)
                if (back.mask.at(r, c, 0) > 0.5f)
                    worst = std::max(worst, std::abs(static_cast<double>(back.image.img.at(r, c, 0)) -
                                                     img.img.at(r, c, 0)));
        CHECK(worst < 0.02);
    }

    SUBCASE("a constant panorama produces a constant crop") {
        ErpImage flat(32, 64, 3, Domain::HdrLinear);
        std::fill(flat.img.data.begin(), flat.img.data.end(), 0.75f);
        const Image crop = erp_to_perspective(flat, 90.0, 123.0, -20.0, 24, 36);
        for (float v : crop.data) CHECK(v == doctest::Approx(0.75f));
    }

    SUBCASE("yaw-180 crop equals the crop of the half-rolled panorama, nearest-exact") {
        const Image a = erp_to_perspective(img, 65.0, 180.0, 5.0, 33, 47, Sampling::Nearest);
        const Image b = erp_to_perspective(yaw_roll(img, 64), 65.0, 0.0, 5.0, 33, 47, Sampling::Nearest);
        CHECK(a.data == b.data);
    }
}

TEST_CASE("texel solid angles telescope to the full sphere") {
    SUBCASE("sum over all texels is 4*pi within 1e-9") {
        const std::int64_t h = 64, w = 128;
        double sum = 0;
        for (std::int64_t r = 0; r < h; ++r) sum += solid_angle(r, h, w) * static_cast<double>(w);
        CHECK(std::abs(sum - 4 * kPi) < 1e-9);
    }
    SUBCASE("equator rows carry the largest texel") {
        const std::int64_t h = 64, w = 128;
        double mx = 0;
        std::int64_t arg = -1;
        for (std::int64_t r = 0; r < h; ++r)
            if (solid_angle(r, h, w) > mx) {
                mx = solid_angle(r, h, w);
                arg = r;
            }
        CHECK((arg == h / 2 - 1 || arg == h / 2));
    }
    SUBCASE("H=1, W=2 texels are hemispheres") {
        CHECK(solid_angle(0, 1, 2) == doctest::Approx(2 * kPi).epsilon(1e-12));
    }
}

TEST_CASE("vertical flip is an involutive sphere isometry") {
    Rng rng(3);
    ErpImage img(8, 16, 3, Domain::HdrLinear);
    for (auto& v : img.img.data) v = static_cast<float>(rng.uniform(0, 1));
    CHECK(vflip(vflip(img)).img.data == img.img.data);
    CHECK(weighted_mean(vflip(img)) == doctest::Approx(weighted_mean(img)).epsilon(1e-9));
}
