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
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pano/attention.hpp"
#include "pano/autodiff.hpp"
#include "pano/image.hpp"
#include "pano/rng.hpp"

// The U-shaped window-transformer generator and the strided-conv critic.
// Encoder stages downsample by 2x2 patch merge, the bottleneck runs without
// pitch attention, the decoder mirrors the encoder with nearest upsampling
// and encoder shortcuts. All image-space convolutions pad circularly along
// the seam and by reflection at the poles, so no border is ever learnt.

namespace pano::net {

enum class ConvPadding { Erp, Zero };  // Zero is the seam-ablation path

struct GeneratorConfig {
    std::int64_t in_h = 256, in_w = 512;
    std::int64_t patch = 4;
    std::vector<std::int64_t> depths{3, 3, 7, 2};
    std::int64_t bottleneck_depth = 2;
    std::int64_t base_channels = 32;
    std::int64_t window = 8;
    std::int64_t head_dim = 16;  // heads = max(1, channels / head_dim)
    attn::Variant variant = attn::Variant::Pano;
    bool rel_pos_bias = true;
    ConvPadding padding = ConvPadding::Erp;
    // pitch-attention placement: every encoder block except the last, none in
    // the bottleneck, none in the first decoder block
    bool use_pam = true;

    std::int64_t stages() const { return static_cast<std::int64_t>(depths.size()); }
    std::int64_t stage_channels(std::int64_t i) const { return base_channels << i; }
    std::int64_t bottleneck_channels() const { return base_channels << stages(); }
    // token grid height at stage i (width is always 2x)
    std::int64_t grid_h(std::int64_t i) const { return (in_h / patch) >> i; }
    std::int64_t grid_w(std::int64_t i) const { return (in_w / patch) >> i; }
    std::int64_t stage_window(std::int64_t i) const {
        return std::min({window, grid_h(i), grid_w(i)});
    }
    std::int64_t bottleneck_window() const {
        return std::min({window, grid_h(stages()), grid_w(stages())});
    }
    bool encoder_has_pam(std::int64_t i) const { return use_pam && i + 1 < stages(); }
    bool decoder_has_pam(std::int64_t i) const { return use_pam && i != stages() - 1; }
    std::int64_t heads_for(std::int64_t channels) const {
        return std::max<std::int64_t>(1, channels / head_dim);
    }

    void validate() const;
    std::string describe() const;
};

// ---- parameter registry ----

template <class T>
struct ParamStore {
    // name -> tensor; ordered for deterministic iteration and checkpoints
    std::map<std::string, Tensor<T>> params;

    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        auto [it, fresh] = params.emplace(name, std::move(t));
        if (!fresh) throw std::logic_error("duplicate parameter " + name);
        return it->second;
    }
    std::int64_t count() const {
        std::int64_t n = 0;
        for (const auto& [k, v] : params) n += v.numel();
        return n;
    }
};

template <class T>
struct BoundParams {
    std::map<std::string, Var<T>> vars;
    Var<T> operator[](const std::string& name) const {
        auto it = vars.find(name);
        if (it == vars.end()) throw std::logic_error("unbound parameter " + name);
        return it->second;
    }
};

template <class T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamStore<T>& store, bool trainable) {
    BoundParams<T> b;
    for (const auto& [name, tensor] : store.params) b.vars.emplace(name, tape.leaf(tensor, trainable));
    return b;
}

// ---- generator ----

template <class T>
struct Generator {
    GeneratorConfig cfg;
    ParamStore<T> store;

    static Generator build(const GeneratorConfig& cfg, std::uint64_t seed);

    // input [4, H, W] (RGB in [0,1] + mask), output [3, H, W] in [-1, 1]
    Var<T> forward(Tape<T>& tape, Var<T> input, const BoundParams<T>& p) const;

    // convenience single-sample inference
    Tensor<T> infer(const Tensor<T>& input) const;

    std::int64_t param_count() const { return store.count(); }
};

// closed-form parameter count derived from the configuration alone; the
// architecture-conformance test checks it against the constructed store
std::int64_t expected_param_count(const GeneratorConfig& cfg);

// stage token-grid sizes, in order: stages then bottleneck
std::vector<std::pair<std::int64_t, std::int64_t>> stage_grids(const GeneratorConfig& cfg);

// smallest base width whose parameter count lands nearest the target
GeneratorConfig sweep_to_param_target(GeneratorConfig base, std::int64_t target,
                                      std::int64_t c_lo = 64, std::int64_t c_hi = 256);

// ---- discriminator ----

struct DiscriminatorConfig {
    std::int64_t in_h = 256, in_w = 512;
    std::int64_t base_channels = 32;
    std::int64_t stages = 5;  // stride-2 convolutions
    ConvPadding padding = ConvPadding::Erp;
};

template <class T>
struct Discriminator {
    DiscriminatorConfig cfg;
    ParamStore<T> store;

    static Discriminator build(const DiscriminatorConfig& cfg, std::uint64_t seed);
    // input [3, H, W] compressed-HDR; returns [1] logit
    Var<T> forward(Tape<T>& tape, Var<T> input, const BoundParams<T>& p) const;
};

// ---- checkpoint container ----
// versioned binary: magic, version, config echo (key=value text), named
// parameter blobs (name, shape, little-endian f32) and a CRC32 trailer.

struct Checkpoint {
    std::map<std::string, std::string> config;
    std::map<std::string, Tensor<float>> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

template <class T>
Checkpoint make_checkpoint(const Generator<T>& gen);
template <class T>
Generator<T> generator_from_checkpoint(const Checkpoint& ck);

GeneratorConfig config_from_map(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> config_to_map(const GeneratorConfig& cfg);

// ---- tensor <-> image helpers ----

// [C,H,W] tensor from an interleaved raster
template <class T>
Tensor<T> chw_from_image(const Image& img) {
    Tensor<T> t({img.c, img.h, img.w});
    for (std::int64_t ch = 0; ch < img.c; ++ch)
        for (std::int64_t r = 0; r < img.h; ++r)
            for (std::int64_t c = 0; c < img.w; ++c)
                t.v[static_cast<std::size_t>((ch * img.h + r) * img.w + c)] = static_cast<T>(img.at(r, c, ch));
    return t;
}

template <class T>
Image image_from_chw(const Tensor<T>& t) {
    Image img(t.shape[1], t.shape[2], t.shape[0]);
    for (std::int64_t ch = 0; ch < img.c; ++ch)
        for (std::int64_t r = 0; r < img.h; ++r)
            for (std::int64_t c = 0; c < img.w; ++c)
                img.at(r, c, ch) = static_cast<float>(t.v[static_cast<std::size_t>((ch * img.h + r) * img.w + c)]);
    return img;
}

}  // namespace pano::net

#include "pano/network_impl.hpp"
