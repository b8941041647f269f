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

#include "pano/ibl.hpp"

#include <algorithm>
#include <cmath>

#include "pano/image_io.hpp"
#include "pano/synth.hpp"
#include "pano/threadpool.hpp"

namespace pano::ibl {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Rgb diffuse_irradiance(const ErpImage& env, erp::Vec3 normal) {
    Rgb acc{0, 0, 0};
    const std::int64_t h = env.h(), w = env.w();
    for (std::int64_t r = 0; r < h; ++r) {
        const double sa = erp::solid_angle(r, h, w);
        for (std::int64_t c = 0; c < w; ++c) {
            const erp::Vec3 d = erp::pix_to_dir(r, c, h, w);
            const double cosw = erp::dot(normal, d);
            if (cosw <= 0) continue;
            const float* px = env.img.px(r, c);
            const double wgt = cosw * sa;
            acc[0] += px[0] * wgt;
            acc[1] += px[1] * wgt;
            acc[2] += px[2] * wgt;
        }
    }
    return acc;
}

IrradianceMap build_irradiance_map(const ErpImage& env, std::int64_t grid_h, std::int64_t grid_w) {
    IrradianceMap im;
    im.map = Image(grid_h, grid_w, 3);
    for (std::int64_t r = 0; r < grid_h; ++r)
        for (std::int64_t c = 0; c < grid_w; ++c) {
            const Rgb e = diffuse_irradiance(env, erp::pix_to_dir(r, c, grid_h, grid_w));
            for (int ch = 0; ch < 3; ++ch) im.map.at(r, c, ch) = static_cast<float>(e[static_cast<std::size_t>(ch)]);
        }
    return im;
}

Rgb lookup_irradiance(const IrradianceMap& im, erp::Vec3 normal) {
    const auto [rc, cc] = erp::dir_to_pix(normal, im.map.h, im.map.w);
    float out[3];
    erp::sample_erp_bilinear(im.map, rc, cc, out);
    return {out[0], out[1], out[2]};
}

ProbeRender render_probe_array(const ErpImage& env, const ProbeScene& scene) {
    const IrradianceMap im = build_irradiance_map(env);
    ProbeRender out;
    out.linear = Image(scene.out_h, scene.out_w, 3);

    // orthographic top-front camera: rays along (0, 1, -1)/sqrt(2); image
    // right is +x, image up is (0, 1, 1)/sqrt(2)
    const erp::Vec3 view = erp::normalized({0, 1, -1});
    const erp::Vec3 right{1, 0, 0};
    const erp::Vec3 up = erp::normalized({0, 1, 1});

    // sphere centres: 3x3 grid on the plane, radius 1, resting at z=1
    std::vector<erp::Vec3> centres;
    for (int gy = -1; gy <= 1; ++gy)
        for (int gx = -1; gx <= 1; ++gx)
            centres.push_back({gx * scene.spacing, gy * scene.spacing, 1.0});

    for (std::int64_t py = 0; py < scene.out_h; ++py)
        for (std::int64_t px = 0; px < scene.out_w; ++px) {
            const double u = (2.0 * (static_cast<double>(px) + 0.5) / static_cast<double>(scene.out_w) - 1.0) *
                             scene.half_extent;
            const double v = (1.0 - 2.0 * (static_cast<double>(py) + 0.5) / static_cast<double>(scene.out_h)) *
                             scene.half_extent;
            const erp::Vec3 origin = erp::Vec3{0, 0, 1} + u * right + v * up + -20.0 * view;

            double best_t = 1e30;
            erp::Vec3 normal{};
            bool hit = false;
            for (const auto& c : centres) {
                const erp::Vec3 oc = origin - c;
                const double b = erp::dot(oc, view);
                const double disc = b * b - (erp::dot(oc, oc) - 1.0);
                if (disc < 0) continue;
                const double t = -b - std::sqrt(disc);
                if (t > 0 && t < best_t) {
                    best_t = t;
                    const erp::Vec3 pnt = origin + t * view;
                    normal = erp::normalized(pnt - c);
                    hit = true;
                }
            }
            // ground plane z = 0
            if (view.z != 0.0) {
                const double t = -origin.z / view.z;
                if (t > 0 && t < best_t) {
                    best_t = t;
                    normal = {0, 0, 1};
                    hit = true;
                }
            }
            float* dst = out.linear.px(py, px);
            if (!hit) {
                dst[0] = dst[1] = dst[2] = 0.0f;
                continue;
            }
            const Rgb e = lookup_irradiance(im, normal);
            for (int ch = 0; ch < 3; ++ch)
                dst[ch] = static_cast<float>(e[static_cast<std::size_t>(ch)] / kPi);  // albedo 1
        }
    out.ldr = io::tonemap_for_metrics(out.linear);
    return out;
}

MetricReport metrics(const ProbeRender& pred, const ProbeRender& gt) {
    if (pred.ldr.numel() == 0 || pred.ldr.h != gt.ldr.h || pred.ldr.w != gt.ldr.w ||
        pred.ldr.c != gt.ldr.c)
        throw std::invalid_argument("metrics: empty or mismatched renders");
    MetricReport rep;
    const std::size_t n = pred.ldr.data.size();

    double mse = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pred.ldr.data[i]) - gt.ldr.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(n);
    rep.rmse = std::sqrt(mse);
    rep.psnr_db = mse <= 0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / mse));

    // least-squares scale on the linear renders, then display-mapped RMSE
    double pg = 0, pp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        pg += static_cast<double>(pred.linear.data[i]) * gt.linear.data[i];
        pp += static_cast<double>(pred.linear.data[i]) * pred.linear.data[i];
    }
    const double s = pp > 1e-12 ? pg / pp : 1.0;
    Image scaled = pred.linear;
    for (auto& v : scaled.data) v = static_cast<float>(v * s);
    const Image scaled_ldr = io::tonemap_for_metrics(scaled);
    double smse = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(scaled_ldr.data[i]) - gt.ldr.data[i];
        smse += d * d;
    }
    rep.si_rmse = std::sqrt(smse / static_cast<double>(n));

    // mean per-pixel RGB angle on the display-mapped pair
    double asum = 0;
    std::int64_t acount = 0;
    for (std::int64_t r = 0; r < pred.ldr.h; ++r)
        for (std::int64_t c = 0; c < pred.ldr.w; ++c) {
            const float* a = pred.ldr.px(r, c);
            const float* b = gt.ldr.px(r, c);
            double na = 0, nb = 0, dotv = 0;
            for (int ch = 0; ch < 3; ++ch) {
                na += static_cast<double>(a[ch]) * a[ch];
                nb += static_cast<double>(b[ch]) * b[ch];
                dotv += static_cast<double>(a[ch]) * b[ch];
            }
            na = std::sqrt(na);
            nb = std::sqrt(nb);
            if (na < 1e-6 || nb < 1e-6) continue;
            const double ratio = std::clamp(dotv / (na * nb), -1.0, 1.0);
            // rounding through the two square roots costs ~1 ulp; identical
            // pixels must score exactly zero
            asum += ratio >= 1.0 - 1e-12 ? 0.0 : std::acos(ratio);
            ++acount;
        }
    rep.rgb_angular_deg = acount > 0 ? asum / static_cast<double>(acount) * 180.0 / kPi : 0.0;
    return rep;
}

MetricReport average(const std::vector<MetricReport>& reports) {
    MetricReport m;
    if (reports.empty()) return m;
    for (const auto& r : reports) {
        m.si_rmse += r.si_rmse;
        m.rmse += r.rmse;
        m.rgb_angular_deg += r.rgb_angular_deg;
        m.psnr_db += r.psnr_db;
    }
    const double n = static_cast<double>(reports.size());
    m.si_rmse /= n;
    m.rmse /= n;
    m.rgb_angular_deg /= n;
    m.psnr_db /= n;
    return m;
}

EvalModel identity_model() {
    return [](const EvalInput& in) { return *in.gt_linear; };
}

std::vector<std::pair<double, double>> protocol_views(EvalMode mode) {
    std::vector<std::pair<double, double>> views;
    if (mode == EvalMode::Indoor) {
        for (int i = 0; i < 10; ++i) views.emplace_back(36.0 * i, 50.0);
    } else {
        for (int i = 0; i < 3; ++i) views.emplace_back(120.0 * i, 90.0);
    }
    return views;
}

EvalResult eval_protocol(const EvalModel& model, const std::vector<ErpImage>& panoramas,
                         EvalMode mode, std::int64_t jobs, const ProbeScene& scene) {
    const auto views = protocol_views(mode);
    EvalResult result;
    result.crops_per_pano = static_cast<std::int64_t>(views.size());
    result.per_item.resize(panoramas.size());

    const auto run_item = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const ErpImage& gt = panoramas[i];
            const ProbeRender gt_render = render_probe_array(gt, scene);
            std::vector<MetricReport> per_crop;
            for (const auto& [yaw, fov] : views) {
                const synth::TrainingPair pair = synth::make_training_pair(gt, fov, yaw);
                EvalInput in{pair.input_ldr, pair.mask, &gt, fov, yaw};
                const ErpImage pred = model(in);
                const ProbeRender pred_render = render_probe_array(pred, scene);
                per_crop.push_back(metrics(pred_render, gt_render));
            }
            result.per_item[i] = average(per_crop);
        }
    };
    if (jobs > 1)
        ThreadPool::global().parallel_for(0, panoramas.size(), run_item);
    else
        run_item(0, panoramas.size());
    result.aggregate = average(result.per_item);
    return result;
}

}  // namespace pano::ibl
