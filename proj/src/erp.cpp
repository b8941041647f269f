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

#include "pano/erp.hpp"

#include <algorithm>
#include <stdexcept>

namespace pano::erp {

namespace {
constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }

inline std::int64_t wrap_col(std::int64_t c, std::int64_t w) { return ((c % w) + w) % w; }
}  // namespace

Vec3 coord_to_dir(double rc, double cc, std::int64_t h, std::int64_t w) {
    const double theta = rc * kPi / static_cast<double>(h);
    const double phi = cc * 2.0 * kPi / static_cast<double>(w) - kPi;
    const double st = std::sin(theta);
    return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
}

Vec3 pix_to_dir(std::int64_t r, std::int64_t c, std::int64_t h, std::int64_t w) {
    return coord_to_dir(static_cast<double>(r) + 0.5, static_cast<double>(c) + 0.5, h, w);
}

std::pair<double, double> dir_to_pix(Vec3 v, std::int64_t h, std::int64_t w) {
    const double theta = std::acos(std::clamp(v.z, -1.0, 1.0));
    const double phi = std::atan2(v.y, v.x);
    double rc = theta * static_cast<double>(h) / kPi;
    double cc = (phi + kPi) * static_cast<double>(w) / (2.0 * kPi);
    if (cc >= static_cast<double>(w)) cc -= static_cast<double>(w);
    return {rc, cc};
}

Vec3 rotate_x(Vec3 v, double a) {
    const double ca = std::cos(a), sa = std::sin(a);
    return {v.x, v.y * ca - v.z * sa, v.y * sa + v.z * ca};
}

void sample_erp_bilinear(const Image& img, double rc, double cc, float* out) {
    const double y = rc - 0.5;
    const double x = cc - 0.5;
    const std::int64_t y0f = static_cast<std::int64_t>(std::floor(y));
    const std::int64_t x0f = static_cast<std::int64_t>(std::floor(x));
    const double fy = y - static_cast<double>(y0f);
    const double fx = x - static_cast<double>(x0f);
    const std::int64_t y0 = std::clamp<std::int64_t>(y0f, 0, img.h - 1);
    const std::int64_t y1 = std::clamp<std::int64_t>(y0f + 1, 0, img.h - 1);
    const std::int64_t x0 = wrap_col(x0f, img.w);
    const std::int64_t x1 = wrap_col(x0f + 1, img.w);
    const float* p00 = img.px(y0, x0);
    const float* p01 = img.px(y0, x1);
    const float* p10 = img.px(y1, x0);
    const float* p11 = img.px(y1, x1);
    for (std::int64_t ch = 0; ch < img.c; ++ch) {
        const double top = p00[ch] * (1.0 - fx) + p01[ch] * fx;
        const double bot = p10[ch] * (1.0 - fx) + p11[ch] * fx;
        out[ch] = static_cast<float>(top * (1.0 - fy) + bot * fy);
    }
}

void sample_erp_nearest(const Image& img, double rc, double cc, float* out) {
    const std::int64_t r = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(rc)), 0, img.h - 1);
    const std::int64_t c = wrap_col(static_cast<std::int64_t>(std::floor(cc)), img.w);
    const float* p = img.px(r, c);
    std::copy_n(p, img.c, out);
}

void sample_clamped_bilinear(const Image& img, double rc, double cc, float* out) {
    const double y = rc - 0.5;
    const double x = cc - 0.5;
    const std::int64_t y0f = static_cast<std::int64_t>(std::floor(y));
    const std::int64_t x0f = static_cast<std::int64_t>(std::floor(x));
    const double fy = y - static_cast<double>(y0f);
    const double fx = x - static_cast<double>(x0f);
    const std::int64_t y0 = std::clamp<std::int64_t>(y0f, 0, img.h - 1);
    const std::int64_t y1 = std::clamp<std::int64_t>(y0f + 1, 0, img.h - 1);
    const std::int64_t x0 = std::clamp<std::int64_t>(x0f, 0, img.w - 1);
    const std::int64_t x1 = std::clamp<std::int64_t>(x0f + 1, 0, img.w - 1);
    const float* p00 = img.px(y0, x0);
    const float* p01 = img.px(y0, x1);
    const float* p10 = img.px(y1, x0);
    const float* p11 = img.px(y1, x1);
    for (std::int64_t ch = 0; ch < img.c; ++ch) {
        const double top = p00[ch] * (1.0 - fx) + p01[ch] * fx;
        const double bot = p10[ch] * (1.0 - fx) + p11[ch] * fx;
        out[ch] = static_cast<float>(top * (1.0 - fy) + bot * fy);
    }
}

Image yaw_roll_raster(const Image& src, std::int64_t dc) {
    Image out(src.h, src.w, src.c);
    const std::int64_t s = wrap_col(dc, src.w);
    for (std::int64_t r = 0; r < src.h; ++r)
        for (std::int64_t c = 0; c < src.w; ++c)
            std::copy_n(src.px(r, c), src.c, out.px(r, (c + s) % src.w));
    return out;
}

ErpImage yaw_roll(const ErpImage& src, std::int64_t dc) {
    return ErpImage(yaw_roll_raster(src.img, dc), src.domain);
}

ErpImage vflip(const ErpImage& src) {
    ErpImage out(src.h(), src.w(), src.c(), src.domain);
    for (std::int64_t r = 0; r < src.h(); ++r)
        std::copy_n(src.img.px(r, 0), src.w() * src.c(), out.img.px(src.h() - 1 - r, 0));
    return out;
}

ErpImage pitch_rotate(const ErpImage& src, double angle_deg, Sampling sampling) {
    const double a = deg2rad(angle_deg);
    ErpImage out(src.h(), src.w(), src.c(), src.domain);
    for (std::int64_t r = 0; r < src.h(); ++r)
        for (std::int64_t c = 0; c < src.w(); ++c) {
            const Vec3 d = rotate_x(pix_to_dir(r, c, src.h(), src.w()), -a);
            const auto [rc, cc] = dir_to_pix(d, src.h(), src.w());
            if (sampling == Sampling::Bilinear)
                sample_erp_bilinear(src.img, rc, cc, out.img.px(r, c));
            else
                sample_erp_nearest(src.img, rc, cc, out.img.px(r, c));
        }
    return out;
}

Image polar_extend(const Image& src, std::int64_t k) {
    if (k > src.h / 2)
        throw std::invalid_argument("polar_extend: k=" + std::to_string(k) + " exceeds H/2=" +
                                    std::to_string(src.h / 2));
    Image out(src.h + 2 * k, src.w, src.c);
    const std::int64_t half = src.w / 2;
    for (std::int64_t r = 0; r < src.h; ++r)
        std::copy_n(src.px(r, 0), src.w * src.c, out.px(k + r, 0));
    for (std::int64_t j = 0; j < k; ++j) {
        // virtual row -1-j == row j rolled by W/2; same rule at the south pole
        for (std::int64_t c = 0; c < src.w; ++c) {
            std::copy_n(src.px(j, (c + half) % src.w), src.c, out.px(k - 1 - j, c));
            std::copy_n(src.px(src.h - 1 - j, (c + half) % src.w), src.c, out.px(src.h + k + j, c));
        }
    }
    return out;
}

Camera make_camera(double fov_deg, double yaw_deg, double pitch_deg, std::int64_t out_h,
                   std::int64_t out_w) {
    if (!(fov_deg > 0.0 && fov_deg < 180.0))
        throw std::invalid_argument("fov must be in (0, 180), got " + std::to_string(fov_deg));
    const double psi = deg2rad(yaw_deg);
    const double rho = deg2rad(pitch_deg);
    // unpitched frame: forward +x, right -y, up +z; pitch tilts toward +z
    Vec3 f{std::cos(rho), 0.0, std::sin(rho)};
    Vec3 u{-std::sin(rho), 0.0, std::cos(rho)};
    Vec3 r{0.0, -1.0, 0.0};
    auto rz = [&](Vec3 v) {
        return Vec3{v.x * std::cos(psi) - v.y * std::sin(psi),
                    v.x * std::sin(psi) + v.y * std::cos(psi), v.z};
    };
    Camera cam;
    cam.forward = rz(f);
    cam.right = rz(r);
    cam.up = rz(u);
    cam.tan_x = std::tan(deg2rad(fov_deg) / 2.0);
    cam.tan_y = cam.tan_x * static_cast<double>(out_h) / static_cast<double>(out_w);
    return cam;
}

MaskedErp perspective_to_erp(const Image& persp, double fov_deg, double yaw_deg, double pitch_deg,
                             std::int64_t h, std::int64_t w, Domain domain) {
    const Camera cam = make_camera(fov_deg, yaw_deg, pitch_deg, persp.h, persp.w);
    MaskedErp out{ErpImage(h, w, persp.c, domain), Image(h, w, 1)};
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            const Vec3 d = pix_to_dir(r, c, h, w);
            const double zc = dot(d, cam.forward);
            if (zc <= 0.0) continue;
            const double xc = dot(d, cam.right) / zc;
            const double yc = dot(d, cam.up) / zc;
            if (std::abs(xc) > cam.tan_x || std::abs(yc) > cam.tan_y) continue;
            const double px = (xc / cam.tan_x + 1.0) * 0.5 * static_cast<double>(persp.w);
            const double py = (1.0 - yc / cam.tan_y) * 0.5 * static_cast<double>(persp.h);
            sample_clamped_bilinear(persp, py, px, out.image.img.px(r, c));
            out.mask.at(r, c, 0) = 1.0f;
        }
    return out;
}

Image erp_to_perspective(const ErpImage& src, double fov_deg, double yaw_deg, double pitch_deg,
                         std::int64_t out_h, std::int64_t out_w, Sampling sampling) {
    const Camera cam = make_camera(fov_deg, yaw_deg, pitch_deg, out_h, out_w);
    Image out(out_h, out_w, src.c());
    for (std::int64_t py = 0; py < out_h; ++py)
        for (std::int64_t px = 0; px < out_w; ++px) {
            const double xc = (2.0 * (static_cast<double>(px) + 0.5) / static_cast<double>(out_w) - 1.0) * cam.tan_x;
            const double yc = (1.0 - 2.0 * (static_cast<double>(py) + 0.5) / static_cast<double>(out_h)) * cam.tan_y;
            const Vec3 d = normalized(cam.forward + xc * cam.right + yc * cam.up);
            const auto [rc, cc] = dir_to_pix(d, src.h(), src.w());
            if (sampling == Sampling::Bilinear)
                sample_erp_bilinear(src.img, rc, cc, out.px(py, px));
            else
                sample_erp_nearest(src.img, rc, cc, out.px(py, px));
        }
    return out;
}

double solid_angle(std::int64_t r, std::int64_t h, std::int64_t w) {
    const double t0 = static_cast<double>(r) * kPi / static_cast<double>(h);
    const double t1 = static_cast<double>(r + 1) * kPi / static_cast<double>(h);
    return (2.0 * kPi / static_cast<double>(w)) * (std::cos(t0) - std::cos(t1));
}

double weighted_mean(const ErpImage& img) {
    double acc = 0.0, wsum = 0.0;
    for (std::int64_t r = 0; r < img.h(); ++r) {
        const double sa = solid_angle(r, img.h(), img.w());
        for (std::int64_t c = 0; c < img.w(); ++c) {
            const float* p = img.img.px(r, c);
            for (std::int64_t ch = 0; ch < img.c(); ++ch) acc += sa * p[ch];
        }
        wsum += sa * static_cast<double>(img.w() * img.c());
    }
    return acc / wsum;
}

ResamplePlan make_pitch_plan(std::int64_t h, std::int64_t w, double angle_deg) {
    const double a = deg2rad(angle_deg);
    ResamplePlan plan;
    plan.in_h = h;
    plan.in_w = w;
    plan.out_h = h;
    plan.out_w = w;
    plan.taps.resize(static_cast<std::size_t>(h * w));
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            const Vec3 d = rotate_x(pix_to_dir(r, c, h, w), -a);
            const auto [rc, cc] = dir_to_pix(d, h, w);
            const double y = rc - 0.5, x = cc - 0.5;
            const std::int64_t y0f = static_cast<std::int64_t>(std::floor(y));
            const std::int64_t x0f = static_cast<std::int64_t>(std::floor(x));
            const double fy = y - static_cast<double>(y0f);
            const double fx = x - static_cast<double>(x0f);
            const std::int64_t y0 = std::clamp<std::int64_t>(y0f, 0, h - 1);
            const std::int64_t y1 = std::clamp<std::int64_t>(y0f + 1, 0, h - 1);
            const std::int64_t x0 = wrap_col(x0f, w);
            const std::int64_t x1 = wrap_col(x0f + 1, w);
            auto& taps = plan.taps[static_cast<std::size_t>(r * w + c)];
            taps[0] = {y0 * w + x0, (1.0 - fy) * (1.0 - fx)};
            taps[1] = {y0 * w + x1, (1.0 - fy) * fx};
            taps[2] = {y1 * w + x0, fy * (1.0 - fx)};
            taps[3] = {y1 * w + x1, fy * fx};
        }
    return plan;
}

}  // namespace pano::erp
