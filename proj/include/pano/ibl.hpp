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

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pano/erp.hpp"
#include "pano/image.hpp"

// Image-based-lighting evaluation: Lambertian irradiance from an environment
// map, the nine-sphere probe render, and the four render metrics.

namespace pano::ibl {

using Rgb = std::array<double, 3>;

// cosine-weighted integral over all texels: sum L * max(0, n.w) * dOmega
Rgb diffuse_irradiance(const ErpImage& env, erp::Vec3 normal);

// irradiance precomputed over a normal grid, bilinear lookup by direction
struct IrradianceMap {
    Image map;  // grid_h x grid_w x 3
};
IrradianceMap build_irradiance_map(const ErpImage& env, std::int64_t grid_h = 32,
                                   std::int64_t grid_w = 64);
Rgb lookup_irradiance(const IrradianceMap& im, erp::Vec3 normal);

// 3x3 unit spheres on a ground plane, orthographic top-front camera
struct ProbeScene {
    std::int64_t out_h = 96, out_w = 96;
    double spacing = 2.5;
    double half_extent = 4.2;  // orthographic half-width of the view
};

struct ProbeRender {
    Image linear;  // radiance
    Image ldr;     // display-mapped
};
ProbeRender render_probe_array(const ErpImage& env, const ProbeScene& scene = {});

struct MetricReport {
    double si_rmse = 0, rmse = 0, rgb_angular_deg = 0, psnr_db = 0;
};

// RMSE and PSNR on the display-mapped pair; si-RMSE applies the closed-form
// least-squares scale on the linear pair before display mapping; the angular
// error skips pixels whose RGB norm is below 1e-6
MetricReport metrics(const ProbeRender& pred, const ProbeRender& gt);

// aggregate over items (plain means)
MetricReport average(const std::vector<MetricReport>& reports);

enum class EvalMode { Indoor, Outdoor };

struct EvalInput {
    ErpImage masked_ldr;  // display-mapped RGB, zero off-mask
    Image mask;
    const ErpImage* gt_linear;  // for oracle models
    double fov_deg, yaw_deg;
};
// a model maps the masked LFOV observation to a linear-radiance panorama
using EvalModel = std::function<ErpImage(const EvalInput&)>;

// reference oracle: returns the ground truth unchanged
EvalModel identity_model();

// crops per panorama: indoor = ten 50-degree views at 36-degree spacing,
// outdoor = three 90-degree views at {0, 120, 240}
std::vector<std::pair<double, double>> protocol_views(EvalMode mode);  // (yaw, fov)

struct EvalResult {
    MetricReport aggregate;
    std::vector<MetricReport> per_item;
    std::int64_t crops_per_pano = 0;
};

EvalResult eval_protocol(const EvalModel& model, const std::vector<ErpImage>& panoramas,
                         EvalMode mode, std::int64_t jobs = 1, const ProbeScene& scene = {});

}  // namespace pano::ibl
