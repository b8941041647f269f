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

#include <cstdio>

#include "pano/image_io.hpp"
#include "pano/network.hpp"

using namespace pano;
using namespace pano::net;
using D = double;

namespace {

GeneratorConfig toy_config() {
    GeneratorConfig cfg;
    cfg.in_h = 64;
    cfg.in_w = 128;
    cfg.base_channels = 8;
    cfg.depths = {1, 1, 1, 1};
    cfg.bottleneck_depth = 1;
    return cfg;
}

Tensor<D> random_input(Rng& rng, const GeneratorConfig& cfg) {
    Tensor<D> in({4, cfg.in_h, cfg.in_w});
    for (std::int64_t i = 0; i < in.numel(); ++i) {
        const bool mask_plane = i >= 3 * cfg.in_h * cfg.in_w;
        in.v[static_cast<std::size_t>(i)] = mask_plane ? (rng.uniform() < 0.3 ? 1.0 : 0.0)
                                                       : rng.uniform(0.0, 1.0);
    }
    return in;
}

}  // namespace

TEST_CASE("default config produces the published stage grids") {
    GeneratorConfig cfg;  // 256x512
    cfg.validate();
    const auto grids = stage_grids(cfg);
    REQUIRE(grids.size() == 5);
    CHECK(grids[0] == std::pair<std::int64_t, std::int64_t>{64, 128});
    CHECK(grids[1] == std::pair<std::int64_t, std::int64_t>{32, 64});
    CHECK(grids[2] == std::pair<std::int64_t, std::int64_t>{16, 32});
    CHECK(grids[3] == std::pair<std::int64_t, std::int64_t>{8, 16});
    CHECK(grids[4] == std::pair<std::int64_t, std::int64_t>{4, 8});  // bottleneck
}

TEST_CASE("pitch-attention placement: all encoder blocks but the last, no bottleneck, not the first decoder block") {
    GeneratorConfig cfg;
    CHECK(cfg.encoder_has_pam(0));
    CHECK(cfg.encoder_has_pam(1));
    CHECK(cfg.encoder_has_pam(2));
    CHECK_FALSE(cfg.encoder_has_pam(3));
    // decoder runs deepest-first: stage index stages-1 is the first block
    CHECK_FALSE(cfg.decoder_has_pam(3));
    CHECK(cfg.decoder_has_pam(2));
    CHECK(cfg.decoder_has_pam(1));
    CHECK(cfg.decoder_has_pam(0));
}

TEST_CASE("toy generator parameter count matches a by-hand layer count") {
    const GeneratorConfig cfg = toy_config();
    auto gen = Generator<float>::build(cfg, 1);

    // independent hand count, C=8, window caps at the grid sizes
    auto layer = [](std::int64_t d, std::int64_t heads, std::int64_t ws, bool bias) {
        std::int64_t n = 2 * d + (4 * d * d + 4 * d) + 2 * d + (8 * d * d + 5 * d);
        if (bias) n += (2 * ws - 1) * (2 * ws - 1) * heads;
        return n;
    };
    std::int64_t hand = 0;
    hand += 8 * 4 * 4 * 4 + 8;  // embed 4x4x4 -> 8
    // stage grids: 16x32, 8x16, 4x8, 2x4; windows min(8, h): 8, 8, 4, 2
    const std::int64_t dims[4] = {8, 16, 32, 64};
    const std::int64_t wins[4] = {8, 8, 4, 2};
    const std::int64_t heads[4] = {1, 1, 2, 4};  // head_dim 16
    for (int i = 0; i < 4; ++i) {
        hand += layer(dims[i], heads[i], wins[i], true);           // encoder layer
        if (i < 3) hand += layer(dims[i], heads[i], wins[i], false);  // encoder pam
        hand += 4 * dims[i] * 2 * dims[i] + 2 * dims[i];           // patch merge
        hand += 2 * (2 * dims[i] * dims[i] + dims[i]);             // up + fuse
        hand += layer(dims[i], heads[i], wins[i], true);           // decoder layer
        if (i != 3) hand += layer(dims[i], heads[i], wins[i], false);  // decoder pam
    }
    hand += layer(128, 8, 1, true);         // bottleneck, grid 1x2, window 1
    hand += 4 * 8 * 9 + 4 + 3 * 4 * 9 + 3;  // head convs, mid=4
    CHECK(gen.param_count() == hand);
    CHECK(expected_param_count(cfg) == hand);
}

TEST_CASE("closed-form count matches construction for randomized configs") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        GeneratorConfig cfg;
        cfg.in_h = 64 << rng.index(2);  // 64 or 128
        cfg.in_w = 2 * cfg.in_h;
        cfg.base_channels = 8 << rng.index(2);
        const std::size_t nstages = 2 + rng.index(2);
        cfg.depths.assign(nstages, 1);
        for (auto& d : cfg.depths) d = 1 + static_cast<std::int64_t>(rng.index(2));
        cfg.bottleneck_depth = 1 + static_cast<std::int64_t>(rng.index(2));
        cfg.rel_pos_bias = rng.uniform() < 0.5;
        cfg.use_pam = rng.uniform() < 0.7;
        cfg.validate();
        auto gen = Generator<float>::build(cfg, trial);
        CHECK(gen.param_count() == expected_param_count(cfg));
    }
}

TEST_CASE("paper-scale sweep lands within 10% of 220M parameters") {
    GeneratorConfig base;  // 256x512, depths 3,3,7,2
    const std::int64_t target = 220'000'000;
    const GeneratorConfig best = sweep_to_param_target(base, target);
    const std::int64_t got = expected_param_count(best);
    CHECK(std::abs(got - target) < target / 10);
    MESSAGE("paper-scale C=", best.base_channels, " -> ", got, " params");
}

TEST_CASE("generator forward: determinism, range, and no cross-sample mixing") {
    const GeneratorConfig cfg = toy_config();
    auto gen = Generator<D>::build(cfg, 42);
    Rng rng(3);
    Tensor<D> zero({4, cfg.in_h, cfg.in_w});
    const Tensor<D> out1 = gen.infer(zero);
    const Tensor<D> out2 = gen.infer(zero);
    REQUIRE(out1.shape == Shape{3, cfg.in_h, cfg.in_w});
    CHECK(out1.v == out2.v);  // deterministic
    for (auto v : out1.v) {
        CHECK(std::isfinite(v));
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
    // separate samples do not interact: same input in two calls -> same output
    Tensor<D> in = random_input(rng, cfg);
    CHECK(gen.infer(in).v == gen.infer(in).v);

    Tensor<D> bad = zero;
    bad.v[5] = std::nan("");
    CHECK_THROWS_AS(gen.infer(bad), std::invalid_argument);
}

TEST_CASE("generator output carries no seam: wrap-column difference within interior spread") {
    const GeneratorConfig cfg = toy_config();
    auto gen = Generator<D>::build(cfg, 99);
    Rng rng(17);
    double wrap_stat = 0;
    std::vector<double> interior;
    for (int trial = 0; trial < 4; ++trial) {
        const Tensor<D> out = gen.infer(random_input(rng, cfg));
        const std::int64_t h = cfg.in_h, w = cfg.in_w;
        for (std::int64_t c = 0; c < w; ++c) {
            double m = 0;
            for (std::int64_t ch = 0; ch < 3; ++ch)
                for (std::int64_t r = 0; r < h; ++r)
                    m = std::max(m, std::abs(out.v[static_cast<std::size_t>((ch * h + r) * w + c)] -
                                             out.v[static_cast<std::size_t>((ch * h + r) * w + (c + 1) % w)]));
            if (c == w - 1)
                wrap_stat = std::max(wrap_stat, m);
            else
                interior.push_back(m);
        }
    }
    std::sort(interior.begin(), interior.end());
    const double p95 = interior[static_cast<std::size_t>(0.95 * static_cast<double>(interior.size()))];
    CHECK(wrap_stat <= p95);
}

TEST_CASE("shortcut fusion: shape contract, encoder path, gradient flow") {
    Tape<D> t;
    Rng rng(5);
    const std::int64_t h = 4, w = 8, d = 8;
    Tensor<D> upw({2 * d, d}), fusew({2 * d, d});
    for (auto& x : upw.v) x = rng.uniform(-0.2, 0.2);
    for (auto& x : fusew.v) x = rng.uniform(-0.2, 0.2);
    Var<D> upwv = t.leaf(upw, true);
    Var<D> upbv = t.leaf(Tensor<D>::zeros({d}), true);
    Var<D> fusewv = t.leaf(fusew, true);
    Var<D> fusebv = t.leaf(Tensor<D>::zeros({d}), true);

    auto fuse = [&](Var<D> dec, Var<D> enc) {
        Var<D> g = upsample2x(dec, 0, 1);
        g = add(matmul(g, upwv), upbv);
        g = concat(std::vector<Var<D>>{g, enc}, 2);
        return add(matmul(g, fusewv), fusebv);
    };

    Tensor<D> deep({h / 2, w / 2, 2 * d});
    Tensor<D> skip({h, w, d});
    for (auto& x : deep.v) x = rng.uniform(-1, 1);
    for (auto& x : skip.v) x = rng.uniform(-1, 1);
    Var<D> dec = t.leaf(deep, true);
    Var<D> enc = t.leaf(skip, true);
    Var<D> fused = fuse(dec, enc);
    REQUIRE(fused.shape() == Shape{h, w, d});

    // zero decoder feature: output is a pure function of the encoder feature
    Var<D> z = t.leaf(Tensor<D>::zeros({h / 2, w / 2, 2 * d}), false);
    Var<D> a = fuse(z, enc);
    Tensor<D> skip2 = skip;
    skip2.v[0] += 0.5;
    Var<D> b = fuse(z, t.leaf(skip2, false));
    CHECK(a.val().v != b.val().v);

    // gradient reaches both branches
    t.backward(sum_all(mul(fused, fused)));
    double gdec = 0, genc = 0;
    for (auto v : t.node(dec.id).grad.v) gdec += std::abs(v);
    for (auto v : t.node(enc.id).grad.v) genc += std::abs(v);
    CHECK(gdec > 0);
    CHECK(genc > 0);
}

TEST_CASE("discriminator: shape, finiteness, yaw invariance of the logit") {
    DiscriminatorConfig cfg;
    cfg.in_h = 64;
    cfg.in_w = 128;
    cfg.base_channels = 8;
    auto disc = Discriminator<D>::build(cfg, 11);
    Rng rng(13);
    Tensor<D> x({3, 64, 128});
    for (auto& v : x.v) v = rng.uniform(0, 2);

    Tape<D> t;
    auto p = bind_params(t, disc.store, false);
    Var<D> logit = disc.forward(t, t.leaf(x, false), p);
    REQUIRE(logit.shape() == Shape{1});
    CHECK(std::isfinite(logit.val().v[0]));

    // rolling by multiples of 2^stages columns leaves the logit unchanged
    Tensor<D> rolled({3, 64, 128});
    const std::int64_t dc = 32;
    for (std::int64_t ch = 0; ch < 3; ++ch)
        for (std::int64_t r = 0; r < 64; ++r)
            for (std::int64_t c = 0; c < 128; ++c)
                rolled.v[static_cast<std::size_t>((ch * 64 + r) * 128 + (c + dc) % 128)] =
                    x.v[static_cast<std::size_t>((ch * 64 + r) * 128 + c)];
    Var<D> logit2 = disc.forward(t, t.leaf(rolled, false), p);
    CHECK(std::abs(logit.val().v[0] - logit2.val().v[0]) < 1e-4);
}

TEST_CASE("checkpoint round trip preserves weights, config, and inference") {
    const GeneratorConfig cfg = toy_config();
    auto gen = Generator<float>::build(cfg, 123);
    const std::string path = "test_ckpt.bin";
    save_checkpoint(path, make_checkpoint(gen));
    auto back = generator_from_checkpoint<float>(load_checkpoint(path));
    CHECK(back.cfg.base_channels == cfg.base_channels);
    CHECK(back.cfg.depths == cfg.depths);
    for (const auto& [name, t] : gen.store.params) {
        const auto& u = back.store.params.at(name);
        CHECK(u.v == t.v);
    }
    Tensor<float> in({4, cfg.in_h, cfg.in_w});
    Rng rng(9);
    for (auto& v : in.v) v = static_cast<float>(rng.uniform(0, 1));
    CHECK(gen.infer(in).v == back.infer(in).v);

    // corruption is detected by the checksum
    auto bytes = pano::io::read_file(path);
    bytes[bytes.size() / 2] ^= 0x5A;
    pano::io::write_file(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("full generator passes a sampled gradient check at 1e-3") {
    GeneratorConfig cfg;
    cfg.in_h = 32;
    cfg.in_w = 64;
    cfg.base_channels = 8;
    cfg.depths = {1, 1};
    cfg.bottleneck_depth = 1;
    auto gen = Generator<D>::build(cfg, 77);
    Rng rng(21);
    Tensor<D> input = random_input(rng, cfg);

    Rng prng(31);
    Tensor<D> proj({3, cfg.in_h, cfg.in_w});
    for (auto& v : proj.v) v = prng.uniform(-1.0, 1.0);

    auto loss_value = [&]() {
        Tape<D> t;
        auto p = bind_params(t, gen.store, false);
        Var<D> y = gen.forward(t, t.leaf(input, false), p);
        return sum_all(mul(y, constant(t, proj))).val().v[0];
    };

    // analytic gradients
    Tape<D> t;
    auto p = bind_params(t, gen.store, true);
    Var<D> xin = t.leaf(input, true);
    Var<D> y = gen.forward(t, xin, p);
    Var<D> loss = sum_all(mul(y, constant(t, proj)));
    t.backward(loss);

    const double eps = 1e-5;
    double maxerr = 0;
    Rng pick(55);
    // sampled coordinates: a handful per parameter family plus the input
    std::vector<std::string> names;
    for (const auto& [n, tensor] : gen.store.params) names.push_back(n);
    for (int s = 0; s < 30; ++s) {
        const std::string& name = names[pick.index(names.size())];
        Tensor<D>& tensor = gen.store.params[name];
        const std::int64_t idx = static_cast<std::int64_t>(pick.index(static_cast<std::uint64_t>(tensor.numel())));
        const double saved = tensor.v[static_cast<std::size_t>(idx)];
        tensor.v[static_cast<std::size_t>(idx)] = saved + eps;
        const double fp = loss_value();
        tensor.v[static_cast<std::size_t>(idx)] = saved - eps;
        const double fm = loss_value();
        tensor.v[static_cast<std::size_t>(idx)] = saved;
        const double num = (fp - fm) / (2 * eps);
        const auto& g = t.node(p[name].id).grad;
        const double ana = g.v.empty() ? 0.0 : g.v[static_cast<std::size_t>(idx)];
        maxerr = std::max(maxerr, std::abs(ana - num) / std::max(1.0, std::abs(ana)));
    }
    for (int s = 0; s < 10; ++s) {
        const std::int64_t idx = static_cast<std::int64_t>(pick.index(static_cast<std::uint64_t>(input.numel())));
        const double saved = input.v[static_cast<std::size_t>(idx)];
        input.v[static_cast<std::size_t>(idx)] = saved + eps;
        const double fp = loss_value();
        input.v[static_cast<std::size_t>(idx)] = saved - eps;
        const double fm = loss_value();
        input.v[static_cast<std::size_t>(idx)] = saved;
        const double num = (fp - fm) / (2 * eps);
        const double ana = t.node(xin.id).grad.v[static_cast<std::size_t>(idx)];
        maxerr = std::max(maxerr, std::abs(ana - num) / std::max(1.0, std::abs(ana)));
    }
    CHECK(maxerr < 1e-3);
}
