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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pano/image.hpp"

// Procedural HDR panoramas (sun disk, sky gradient, checkered ground,
// coloured boxes), the yaw/flip augmentation schedule, LFOV masking, and the
// train/test split at base-scene granularity.

namespace pano::synth {

struct BoxParams {
    std::int64_t r0, r1, c0, c1;  // ERP pixel rect
    float color[3];
};

struct SceneParams {
    std::uint64_t seed = 0;
    double sun_colat_deg = 45, sun_lon_deg = 0;
    double sun_radiance = 20;             // within [5, 90]
    double sun_radius_deg = 2.0;
    float zenith[3] = {0.2f, 0.35f, 0.6f};
    float horizon[3] = {0.7f, 0.75f, 0.9f};
    float ground_a[3] = {0.3f, 0.25f, 0.2f};
    float ground_b[3] = {0.12f, 0.1f, 0.08f};
    double checker_deg = 15.0;
    std::vector<BoxParams> boxes;

    static SceneParams random(std::uint64_t seed, std::int64_t h, std::int64_t w);
};

// deterministic render of the scene into a linear-radiance panorama
ErpImage gen_panorama(const SceneParams& params, std::int64_t h, std::int64_t w);

struct AugmentSpec {
    double yaw_deg = 0;  // snapped to whole columns on application
    bool vflip = false;
};

// eight distinct yaw draws from {20,60,...,340} with a 20% flip chance each
std::vector<AugmentSpec> augment_specs(std::uint64_t seed);
ErpImage apply_augment(const ErpImage& pano, const AugmentSpec& spec);

// masked LFOV input paired with the compressed ground truth
struct TrainingPair {
    ErpImage input_ldr;  // masked display-mapped RGB (zeros off-mask)
    Image mask;          // H x W x 1
    ErpImage gt_compressed;
    double fov_deg = 90;
};

constexpr double kFovChoices[4] = {40, 60, 90, 120};

TrainingPair make_training_pair(const ErpImage& pano_linear, double fov_deg, double yaw_deg = 0.0,
                                std::int64_t crop_size = 128);

// ---- dataset directory: scenes/<id>/pano.hdr, scenes/<id>/aug_<k>.hdr,
// manifest.json with split + parameter echo ----

struct SceneEntry {
    std::string id;
    bool test = false;
    SceneParams params;
    std::vector<AugmentSpec> augs;
};

struct Manifest {
    std::uint64_t seed = 0;
    std::int64_t height = 0, width = 0;
    std::vector<SceneEntry> scenes;
};

// 99:1 split at base-scene granularity; all augmentations follow their base
void split_dataset(Manifest& manifest, std::uint64_t seed);

// generate scenes+augmentations, write files and manifest; returns manifest
Manifest synth_dataset(const std::string& dir, std::int64_t scenes, std::uint64_t seed,
                       std::int64_t height, std::int64_t width, std::int64_t jobs = 1);

Manifest load_manifest(const std::string& dir);
void save_manifest(const std::string& dir, const Manifest& manifest);

// lazily-augmenting view over a dataset directory (base panoramas in memory)
class SceneSet {
  public:
    static SceneSet load(const std::string& dir, bool test_split);

    std::size_t size() const { return items_.size(); }  // base x (1 + augs)
    // item i: base scene with augmentation applied (index 0 = unaugmented)
    ErpImage panorama(std::size_t item) const;
    const Manifest& manifest() const { return manifest_; }

  private:
    struct Item {
        std::size_t scene;
        std::optional<AugmentSpec> aug;
    };
    Manifest manifest_;
    std::vector<ErpImage> base_;
    std::vector<Item> items_;
};

}  // namespace pano::synth
