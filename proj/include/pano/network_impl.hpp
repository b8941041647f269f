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

// template bodies for network.hpp

namespace pano::net {

namespace detail {

template <class T>
Tensor<T> trunc_normal_tensor(Rng& rng, Shape shape) {
    Tensor<T> t(std::move(shape));
    for (auto& x : t.v) x = static_cast<T>(rng.trunc_normal(0.02, 2.0));
    return t;
}

// one pre-LN transformer layer parameter block: norm + attention + norm + mlp
template <class T>
void add_layer_params(ParamStore<T>& s, Rng& rng, const std::string& prefix, std::int64_t d,
                      std::int64_t heads, std::int64_t ws, bool bias_table) {
    s.add(prefix + ".ln1.g", Tensor<T>::full({d}, T(1)));
    s.add(prefix + ".ln1.b", Tensor<T>::zeros({d}));
    for (const char* n : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
        s.add(prefix + n, trunc_normal_tensor<T>(rng, {d, d}));
    for (const char* n : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"})
        s.add(prefix + n, Tensor<T>::zeros({d}));
    if (bias_table)
        s.add(prefix + ".attn.bias", trunc_normal_tensor<T>(rng, {(2 * ws - 1) * (2 * ws - 1), heads}));
    s.add(prefix + ".ln2.g", Tensor<T>::full({d}, T(1)));
    s.add(prefix + ".ln2.b", Tensor<T>::zeros({d}));
    s.add(prefix + ".mlp.w1", trunc_normal_tensor<T>(rng, {d, 4 * d}));
    s.add(prefix + ".mlp.b1", Tensor<T>::zeros({4 * d}));
    s.add(prefix + ".mlp.w2", trunc_normal_tensor<T>(rng, {4 * d, d}));
    s.add(prefix + ".mlp.b2", Tensor<T>::zeros({d}));
}

template <class T>
attn::AttnVars<T> layer_attn_vars(const BoundParams<T>& p, const std::string& prefix, bool bias_table) {
    attn::AttnVars<T> v;
    v.wq = p[prefix + ".attn.wq"];
    v.bq = p[prefix + ".attn.bq"];
    v.wk = p[prefix + ".attn.wk"];
    v.bk = p[prefix + ".attn.bk"];
    v.wv = p[prefix + ".attn.wv"];
    v.bv = p[prefix + ".attn.bv"];
    v.wo = p[prefix + ".attn.wo"];
    v.bo = p[prefix + ".attn.bo"];
    if (bias_table) v.bias_table = p[prefix + ".attn.bias"];
    return v;
}

template <class T>
Var<T> layer_norm_p(Var<T> x, const BoundParams<T>& p, const std::string& name) {
    return layer_norm(x, p[name + ".g"], p[name + ".b"]);
}

template <class T>
Var<T> mlp_p(Var<T> x, const BoundParams<T>& p, const std::string& prefix) {
    Var<T> h = gelu(add(matmul(x, p[prefix + ".w1"]), p[prefix + ".b1"]));
    return add(matmul(h, p[prefix + ".w2"]), p[prefix + ".b2"]);
}

// attention layer: x += attn(LN(x)); x += mlp(LN(x)). Even layers use plain
// windows, odd layers the shifted windows.
template <class T>
Var<T> transformer_layer(Var<T> x, const BoundParams<T>& p, const std::string& prefix,
                         const attn::AttnConfig& cfg, bool shifted) {
    auto av = layer_attn_vars(p, prefix, cfg.rel_pos_bias);
    Var<T> n1 = layer_norm_p(x, p, prefix + ".ln1");
    Var<T> a = shifted ? attn::psw_msa_core(n1, cfg, av) : attn::w_msa_core(n1, cfg, av);
    x = add(x, a);
    x = add(x, mlp_p(layer_norm_p(x, p, prefix + ".ln2"), p, prefix + ".mlp"));
    return x;
}

// pitch-attention layer: cross-attention against the 90-degree-pitched grid
template <class T>
Var<T> pam_layer(Var<T> x, const BoundParams<T>& p, const std::string& prefix,
                 const attn::AttnConfig& base_cfg) {
    attn::AttnConfig cfg = base_cfg;
    cfg.rel_pos_bias = false;
    auto av = layer_attn_vars(p, prefix, false);
    const std::int64_t h = x.shape()[0], w = x.shape()[1];
    Var<T> n1 = layer_norm_p(x, p, prefix + ".ln1");
    Var<T> pitched = grid_resample(n1, attn::pitch_plan(h, w));
    Var<T> a = attn::pam_core(n1, pitched, cfg, av, attn::pam_association(h, w, cfg.window));
    x = add(x, a);
    x = add(x, mlp_p(layer_norm_p(x, p, prefix + ".ln2"), p, prefix + ".mlp"));
    return x;
}

// [h,w,d] -> [h/2, w/2, 2d]: 2x2 neighbourhood concat + linear
template <class T>
Var<T> patch_merge(Var<T> x, Var<T> w, Var<T> b) {
    const std::int64_t h = x.shape()[0], wd = x.shape()[1], d = x.shape()[2];
    Var<T> y = reshape(x, {h / 2, 2, wd / 2, 2, d});
    y = permute(y, {0, 2, 1, 3, 4});
    y = reshape(y, {h / 2, wd / 2, 4 * d});
    return add(matmul(y, w), b);
}

// ERP-aware conv: circular seam, reflected poles (or zeros in the ablation)
template <class T>
Var<T> erp_conv(Var<T> x, Var<T> w, Var<T> b, std::int64_t pad_n, std::int64_t stride,
                ConvPadding mode) {
    const PadMode pm = mode == ConvPadding::Erp ? PadMode::Reflect : PadMode::Zero;
    const PadMode pmw = mode == ConvPadding::Erp ? PadMode::Circular : PadMode::Zero;
    Var<T> padded = pad(x, 1, pad_n, pad_n, pm);    // rows
    padded = pad(padded, 2, pad_n, pad_n, pmw);     // columns
    return conv2d(padded, w, b, stride, stride);
}

}  // namespace detail

template <class T>
Generator<T> Generator<T>::build(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Generator<T> g;
    g.cfg = cfg;
    Rng rng(seed);
    ParamStore<T>& s = g.store;
    const std::int64_t ns = cfg.stages();

    s.add("embed.w", detail::trunc_normal_tensor<T>(rng, {cfg.base_channels, 4, cfg.patch, cfg.patch}));
    s.add("embed.b", Tensor<T>::zeros({cfg.base_channels}));

    for (std::int64_t i = 0; i < ns; ++i) {
        const std::int64_t d = cfg.stage_channels(i);
        const std::int64_t ws = cfg.stage_window(i);
        const std::int64_t heads = cfg.heads_for(d);
        for (std::int64_t j = 0; j < cfg.depths[static_cast<std::size_t>(i)]; ++j)
            detail::add_layer_params(s, rng, "enc" + std::to_string(i) + ".l" + std::to_string(j), d,
                                     heads, ws, cfg.rel_pos_bias);
        if (cfg.encoder_has_pam(i))
            detail::add_layer_params(s, rng, "enc" + std::to_string(i) + ".pam", d, heads, ws, false);
        s.add("down" + std::to_string(i) + ".w", detail::trunc_normal_tensor<T>(rng, {4 * d, 2 * d}));
        s.add("down" + std::to_string(i) + ".b", Tensor<T>::zeros({2 * d}));
    }

    const std::int64_t bd = cfg.bottleneck_channels();
    for (std::int64_t j = 0; j < cfg.bottleneck_depth; ++j)
        detail::add_layer_params(s, rng, "bn.l" + std::to_string(j), bd, cfg.heads_for(bd),
                                 cfg.bottleneck_window(), cfg.rel_pos_bias);

    for (std::int64_t i = ns - 1; i >= 0; --i) {
        const std::int64_t d = cfg.stage_channels(i);
        const std::int64_t ws = cfg.stage_window(i);
        const std::int64_t heads = cfg.heads_for(d);
        s.add("up" + std::to_string(i) + ".w", detail::trunc_normal_tensor<T>(rng, {2 * d, d}));
        s.add("up" + std::to_string(i) + ".b", Tensor<T>::zeros({d}));
        s.add("fuse" + std::to_string(i) + ".w", detail::trunc_normal_tensor<T>(rng, {2 * d, d}));
        s.add("fuse" + std::to_string(i) + ".b", Tensor<T>::zeros({d}));
        for (std::int64_t j = 0; j < cfg.depths[static_cast<std::size_t>(i)]; ++j)
            detail::add_layer_params(s, rng, "dec" + std::to_string(i) + ".l" + std::to_string(j), d,
                                     heads, ws, cfg.rel_pos_bias);
        if (cfg.decoder_has_pam(i))
            detail::add_layer_params(s, rng, "dec" + std::to_string(i) + ".pam", d, heads, ws, false);
    }

    const std::int64_t mid = std::max<std::int64_t>(4, cfg.base_channels / 2);
    s.add("head.conv1.w", detail::trunc_normal_tensor<T>(rng, {mid, cfg.base_channels, 3, 3}));
    s.add("head.conv1.b", Tensor<T>::zeros({mid}));
    s.add("head.conv2.w", detail::trunc_normal_tensor<T>(rng, {3, mid, 3, 3}));
    s.add("head.conv2.b", Tensor<T>::zeros({3}));
    return g;
}

template <class T>
Var<T> Generator<T>::forward(Tape<T>& tape, Var<T> input, const BoundParams<T>& p) const {
    const auto& is = input.shape();
    if (is != Shape{4, cfg.in_h, cfg.in_w})
        throw std::invalid_argument("generator: want input [4," + std::to_string(cfg.in_h) + "," +
                                    std::to_string(cfg.in_w) + "], got " + shape_str(is));
    for (auto v : input.val().v)
        if (!std::isfinite(static_cast<double>(v)))
            throw std::invalid_argument("generator: non-finite input");
    const std::int64_t ns = cfg.stages();

    Var<T> x = conv2d(input, p["embed.w"], p["embed.b"], cfg.patch, cfg.patch);  // [C,h0,w0]
    Var<T> g = permute(x, {1, 2, 0});                                            // [h0,w0,C]

    std::vector<Var<T>> skips;
    for (std::int64_t i = 0; i < ns; ++i) {
        attn::AttnConfig acfg{cfg.stage_channels(i), cfg.heads_for(cfg.stage_channels(i)),
                              cfg.stage_window(i), cfg.rel_pos_bias, cfg.variant};
        const std::string sp = "enc" + std::to_string(i);
        for (std::int64_t j = 0; j < cfg.depths[static_cast<std::size_t>(i)]; ++j)
            g = detail::transformer_layer(g, p, sp + ".l" + std::to_string(j), acfg, j % 2 == 1);
        if (cfg.encoder_has_pam(i)) g = detail::pam_layer(g, p, sp + ".pam", acfg);
        skips.push_back(g);
        g = detail::patch_merge(g, p["down" + std::to_string(i) + ".w"],
                                p["down" + std::to_string(i) + ".b"]);
    }

    {
        const std::int64_t bd = cfg.bottleneck_channels();
        attn::AttnConfig acfg{bd, cfg.heads_for(bd), cfg.bottleneck_window(), cfg.rel_pos_bias,
                              cfg.variant};
        for (std::int64_t j = 0; j < cfg.bottleneck_depth; ++j)
            g = detail::transformer_layer(g, p, "bn.l" + std::to_string(j), acfg, j % 2 == 1);
    }

    for (std::int64_t i = ns - 1; i >= 0; --i) {
        const std::string sp = "dec" + std::to_string(i);
        g = upsample2x(g, 0, 1);
        g = add(matmul(g, p["up" + std::to_string(i) + ".w"]), p["up" + std::to_string(i) + ".b"]);
        g = concat(std::vector<Var<T>>{g, skips[static_cast<std::size_t>(i)]}, 2);
        g = add(matmul(g, p["fuse" + std::to_string(i) + ".w"]), p["fuse" + std::to_string(i) + ".b"]);
        attn::AttnConfig acfg{cfg.stage_channels(i), cfg.heads_for(cfg.stage_channels(i)),
                              cfg.stage_window(i), cfg.rel_pos_bias, cfg.variant};
        for (std::int64_t j = 0; j < cfg.depths[static_cast<std::size_t>(i)]; ++j)
            g = detail::transformer_layer(g, p, sp + ".l" + std::to_string(j), acfg, j % 2 == 1);
        if (cfg.decoder_has_pam(i)) g = detail::pam_layer(g, p, sp + ".pam", acfg);
    }

    Var<T> img = permute(g, {2, 0, 1});  // [C, h0, w0]
    for (std::int64_t f = cfg.patch; f > 1; f /= 2) img = upsample2x(img, 1, 2);
    img = detail::erp_conv(img, p["head.conv1.w"], p["head.conv1.b"], 1, 1, cfg.padding);
    img = gelu(img);
    img = detail::erp_conv(img, p["head.conv2.w"], p["head.conv2.b"], 1, 1, cfg.padding);
    return tanh(img);  // [3,H,W] in [-1,1]
}

template <class T>
Tensor<T> Generator<T>::infer(const Tensor<T>& input) const {
    Tape<T> tape;
    auto p = bind_params(tape, store, false);
    Var<T> out = forward(tape, tape.leaf(input, false), p);
    return out.val();
}

template <class T>
Discriminator<T> Discriminator<T>::build(const DiscriminatorConfig& cfg, std::uint64_t seed) {
    Discriminator<T> d;
    d.cfg = cfg;
    Rng rng(seed);
    std::int64_t cin = 3;
    for (std::int64_t i = 0; i < cfg.stages; ++i) {
        const std::int64_t cout = std::min(cfg.base_channels << i, cfg.base_channels * 8);
        d.store.add("d" + std::to_string(i) + ".w", detail::trunc_normal_tensor<T>(rng, {cout, cin, 4, 4}));
        d.store.add("d" + std::to_string(i) + ".b", Tensor<T>::zeros({cout}));
        cin = cout;
    }
    d.store.add("final.w", detail::trunc_normal_tensor<T>(rng, {cin, 1}));
    d.store.add("final.b", Tensor<T>::zeros({1}));
    return d;
}

template <class T>
Var<T> Discriminator<T>::forward(Tape<T>& tape, Var<T> input, const BoundParams<T>& p) const {
    (void)tape;
    const auto& is = input.shape();
    if (is.size() != 3 || is[0] != 3)
        throw std::invalid_argument("discriminator: want [3,H,W], got " + shape_str(is));
    Var<T> x = input;
    for (std::int64_t i = 0; i < cfg.stages; ++i) {
        x = detail::erp_conv(x, p["d" + std::to_string(i) + ".w"], p["d" + std::to_string(i) + ".b"], 1,
                             2, cfg.padding);
        x = leaky_relu(x, T(0.2));
    }
    const std::int64_t c = x.shape()[0];
    Var<T> pooled = mean_axis(reshape(x, {c, x.shape()[1] * x.shape()[2]}), 1);  // [c]
    return reshape(add(matmul(reshape(pooled, {1, c}), p["final.w"]), p["final.b"]), {1});
}

// ---- closed-form parameter count ----

inline std::int64_t layer_param_count(std::int64_t d, std::int64_t heads, std::int64_t ws,
                                      bool bias_table) {
    std::int64_t n = 0;
    n += 2 * d;                    // ln1
    n += 4 * d * d + 4 * d;        // qkv + out projections
    if (bias_table) n += (2 * ws - 1) * (2 * ws - 1) * heads;
    n += 2 * d;                    // ln2
    n += d * 4 * d + 4 * d + 4 * d * d + d;  // mlp
    return n;
}

inline std::int64_t expected_param_count(const GeneratorConfig& cfg) {
    std::int64_t n = 0;
    n += cfg.base_channels * 4 * cfg.patch * cfg.patch + cfg.base_channels;  // embed
    const std::int64_t ns = cfg.stages();
    for (std::int64_t i = 0; i < ns; ++i) {
        const std::int64_t d = cfg.stage_channels(i);
        const std::int64_t ws = cfg.stage_window(i);
        const std::int64_t heads = cfg.heads_for(d);
        n += cfg.depths[static_cast<std::size_t>(i)] * layer_param_count(d, heads, ws, cfg.rel_pos_bias);
        if (cfg.encoder_has_pam(i)) n += layer_param_count(d, heads, ws, false);
        n += 4 * d * 2 * d + 2 * d;  // patch merge
        n += 2 * (2 * d * d + d);    // up + fuse
        n += cfg.depths[static_cast<std::size_t>(i)] * layer_param_count(d, heads, ws, cfg.rel_pos_bias);
        if (cfg.decoder_has_pam(i)) n += layer_param_count(d, heads, ws, false);
    }
    const std::int64_t bd = cfg.bottleneck_channels();
    n += cfg.bottleneck_depth *
         layer_param_count(bd, cfg.heads_for(bd), cfg.bottleneck_window(), cfg.rel_pos_bias);
    const std::int64_t mid = std::max<std::int64_t>(4, cfg.base_channels / 2);
    n += mid * cfg.base_channels * 9 + mid + 3 * mid * 9 + 3;  // head convs
    return n;
}

// ---- checkpoint glue ----

template <class T>
Checkpoint make_checkpoint(const Generator<T>& gen) {
    Checkpoint ck;
    ck.config = config_to_map(gen.cfg);
    for (const auto& [name, t] : gen.store.params) ck.tensors.emplace(name, t.template cast<float>());
    return ck;
}

template <class T>
Generator<T> generator_from_checkpoint(const Checkpoint& ck) {
    Generator<T> g = Generator<T>::build(config_from_map(ck.config), 0);
    if (ck.tensors.size() != g.store.params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch (" +
                                 std::to_string(ck.tensors.size()) + " vs " +
                                 std::to_string(g.store.params.size()) + ")");
    for (auto& [name, t] : g.store.params) {
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) throw std::runtime_error("checkpoint: missing parameter " + name);
        if (it->second.shape != t.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + name + ": " +
                                     shape_str(it->second.shape) + " vs " + shape_str(t.shape));
        t = it->second.template cast<T>();
    }
    return g;
}

}  // namespace pano::net
