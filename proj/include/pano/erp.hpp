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

#include <cmath>
#include <cstdint>
#include <utility>

#include "pano/autodiff.hpp"  // ResamplePlan
#include "pano/image.hpp"

// Equirectangular geometry: direction mapping, exact yaw rolls, pitch
// rotation, polar continuation, gnomonic projection and texel solid angles.
// Colatitude is measured from the north pole; +z points at the north pole.

namespace pano::erp {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) {
    const double n = norm(a);
    return {a.x / n, a.y / n, a.z / n};
}

// angle between unit vectors, stable near 0 and pi
inline double geodesic(Vec3 a, Vec3 b) { return std::atan2(norm(cross(a, b)), dot(a, b)); }

// centre of pixel (r, c)
Vec3 pix_to_dir(std::int64_t r, std::int64_t c, std::int64_t h, std::int64_t w);
// continuous variant: pixel i has centre at coordinate i + 0.5
Vec3 coord_to_dir(double rc, double cc, std::int64_t h, std::int64_t w);
// returns centre-based continuous (r, c); inverse of the above on centres
std::pair<double, double> dir_to_pix(Vec3 v, std::int64_t h, std::int64_t w);

// rotation about the world x-axis (the pitch axis)
Vec3 rotate_x(Vec3 v, double angle_rad);

// bilinear fetch at centre-based coords; columns wrap, rows clamp at poles
void sample_erp_bilinear(const Image& img, double rc, double cc, float* out);
// nearest fetch under the same conventions
void sample_erp_nearest(const Image& img, double rc, double cc, float* out);
// clamped bilinear fetch for plain (non-wrapping) rasters
void sample_clamped_bilinear(const Image& img, double rc, double cc, float* out);

// exact column permutation (r,c) -> (r, (c+dc) mod W)
ErpImage yaw_roll(const ErpImage& src, std::int64_t dc);
Image yaw_roll_raster(const Image& src, std::int64_t dc);

// row reversal r -> H-1-r (pole swap); a sphere isometry used in augmentation
ErpImage vflip(const ErpImage& src);

enum class Sampling { Nearest, Bilinear };

// output pixel p reads src at dir_to_pix(R(-angle) * pix_to_dir(p))
ErpImage pitch_rotate(const ErpImage& src, double angle_deg, Sampling sampling);

// spherical continuation: k virtual rows past each pole (height H+2k);
// virtual row -1-j equals row j rolled half a turn
Image polar_extend(const Image& src, std::int64_t k);

// pinhole camera for a given horizontal fov and orientation
struct Camera {
    Vec3 forward, right, up;
    double tan_x = 0, tan_y = 0;  // half-extents of the image plane at unit depth
};
Camera make_camera(double fov_deg, double yaw_deg, double pitch_deg, std::int64_t out_h,
                   std::int64_t out_w);

struct MaskedErp {
    ErpImage image;
    Image mask;  // H x W x 1; 1 on covered pixels
};

// gnomonic back-projection of a perspective raster onto the sphere
MaskedErp perspective_to_erp(const Image& persp, double fov_deg, double yaw_deg, double pitch_deg,
                             std::int64_t h, std::int64_t w, Domain domain);

// forward gnomonic sampling of an ERP into a perspective crop
Image erp_to_perspective(const ErpImage& src, double fov_deg, double yaw_deg, double pitch_deg,
                         std::int64_t out_h, std::int64_t out_w, Sampling sampling = Sampling::Bilinear);

// exact texel solid angle: (2*pi/W) * (cos(r*pi/H) - cos((r+1)*pi/H))
double solid_angle(std::int64_t r, std::int64_t h, std::int64_t w);

// solid-angle-weighted mean of a raster (per channel mean over the sphere)
double weighted_mean(const ErpImage& img);

// Bilinear pitch-rotation plan for an h x w cell grid laid out on the ERP
// (used to pitch token grids; taps wrap columns and clamp rows).
ResamplePlan make_pitch_plan(std::int64_t h, std::int64_t w, double angle_deg);

}  // namespace pano::erp
