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

#include <filesystem>

#include "pano/losses.hpp"
#include "pano/optim.hpp"
#include "pano/trainer.hpp"

using namespace pano;
using namespace pano::train;
using D = double;

namespace {
Tensor<D> rand_t(Rng& rng, Shape s, double lo = -1, double hi = 1) {
    Tensor<D> t(std::move(s));
    for (auto& v : t.v) v = rng.uniform(lo, hi);
    return t;
}
}  // namespace

TEST_CASE("l1 loss: zero at identity, offset equals the offset, symmetric") {
    Rng rng(1);
    Tensor<D> a = rand_t(rng, {3, 4, 5});
    Tape<D> t;
    Var<D> av = t.leaf(a, false);
    CHECK(l1_loss(av, av).val().v[0] == 0.0);

    Tensor<D> b = a;
    for (auto& v : b.v) v += 0.25;
    Var<D> bv = t.leaf(b, false);
    CHECK(l1_loss(av, bv).val().v[0] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(l1_loss(av, bv).val().v[0] == doctest::Approx(l1_loss(bv, av).val().v[0]).epsilon(1e-12));
}

TEST_CASE("perceptual loss: identity extractor degenerates to l1") {
    Rng rng(2);
    Tensor<D> a = rand_t(rng, {3, 8, 16});
    Tensor<D> b = rand_t(rng, {3, 8, 16});
    Tape<D> t;
    Var<D> av = t.leaf(a, false);
    Var<D> bv = t.leaf(b, false);
    const double lp = perceptual_loss(identity_extractor<D>(), av, bv).val().v[0];
    const double l1 = l1_loss(av, bv).val().v[0];
    CHECK(lp == l1);
    CHECK(perceptual_loss(identity_extractor<D>(), av, av).val().v[0] == 0.0);
}

TEST_CASE("default extractor: zero on identical inputs, positive on a one-pixel change") {
    Rng rng(3);
    Tensor<D> a = rand_t(rng, {3, 16, 32}, 0, 1);
    Tensor<D> b = a;
    b.v[5 * 32 + 7] += 0.5;  // one pixel
    Tape<D> t;
    Var<D> av = t.leaf(a, false);
    Var<D> bv = t.leaf(b, false);
    const auto extractor = default_extractor<D>(7);
    CHECK(perceptual_loss(extractor, av, av).val().v[0] == 0.0);
    CHECK(perceptual_loss(extractor, av, bv).val().v[0] > 0.0);
}

TEST_CASE("relativistic average least-squares identities") {
    Tape<D> t;

    SUBCASE("equal constant logits give loss 2 on both sides") {
        Var<D> r = t.leaf(Tensor<D>::full({4}, 0.7), false);
        Var<D> f = t.leaf(Tensor<D>::full({4}, 0.7), false);
        auto [ld, lg] = ralsgan_losses(r, f);
        CHECK(ld.val().v[0] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(lg.val().v[0] == doctest::Approx(2.0).epsilon(1e-12));
    }

    SUBCASE("perfect unit margins zero the critic loss") {
        // d_real - Ef = 1 and d_fake - Er = -1 for every sample
        Var<D> r = t.leaf(Tensor<D>::full({4}, 1.0), false);
        Var<D> f = t.leaf(Tensor<D>::full({4}, 0.0), false);
        auto [ld, lg] = ralsgan_losses(r, f);
        CHECK(ld.val().v[0] == doctest::Approx(0.0).epsilon(1e-12));
        (void)lg;
    }

    SUBCASE("shifting every logit by a constant changes nothing") {
        Rng rng(4);
        Tensor<D> r = rand_t(rng, {6});
        Tensor<D> f = rand_t(rng, {6});
        Tensor<D> r2 = r, f2 = f;
        for (auto& v : r2.v) v += 3.25;
        for (auto& v : f2.v) v += 3.25;
        auto [ld1, lg1] = ralsgan_losses(t.leaf(r, false), t.leaf(f, false));
        auto [ld2, lg2] = ralsgan_losses(t.leaf(r2, false), t.leaf(f2, false));
        CHECK(ld1.val().v[0] == doctest::Approx(ld2.val().v[0]).epsilon(1e-10));
        CHECK(lg1.val().v[0] == doctest::Approx(lg2.val().v[0]).epsilon(1e-10));
    }

    SUBCASE("generator adversarial gradient matches central differences") {
        Rng rng(5);
        Tensor<D> r = rand_t(rng, {5});
        Tensor<D> f = rand_t(rng, {5});
        const double err = grad_check<D>(
            [&](Tape<D>& tp, Var<D> fv) {
                auto [ld, lg] = ralsgan_losses(tp.leaf(r, false), fv);
                (void)ld;
                return lg;
            },
            f, 1e-5);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("weighted total: arithmetic, zeros, linearity") {
    Tape<D> t;
    auto c = [&](double v) { return t.leaf(Tensor<D>::scalar(v), false); };
    LossWeights w;  // 5, 5, 0.2
    CHECK(total_generator_loss(w, c(0.1), c(0.2), c(1.0)).val().v[0] ==
          doctest::Approx(1.7).epsilon(1e-12));
    LossWeights zero{0, 0, 0};
    CHECK(total_generator_loss(zero, c(9), c(9), c(9)).val().v[0] == 0.0);
    // linear in each term
    const double base = total_generator_loss(w, c(0.1), c(0.2), c(1.0)).val().v[0];
    const double bumped = total_generator_loss(w, c(0.1 + 1.0), c(0.2), c(1.0)).val().v[0];
    CHECK(bumped - base == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("adam: lr zero is a no-op, a real step moves the parameters") {
    net::GeneratorConfig cfg;
    cfg.in_h = 32;
    cfg.in_w = 64;
    cfg.base_channels = 8;
    cfg.depths = {1, 1};
    cfg.bottleneck_depth = 1;
    auto gen = net::Generator<float>::build(cfg, 5);
    const auto before = gen.store.params;

    auto run_step = [&](float lr) {
        Tape<float> t;
        auto p = net::bind_params(t, gen.store, true);
        Tensor<float> in({4, 32, 64});
        Rng rng(6);
        for (auto& v : in.v) v = static_cast<float>(rng.uniform(0, 1));
        Var<float> y = gen.forward(t, t.leaf(in, false), p);
        t.backward(mean_all(mul(y, y)));
        Adam<float>::Config acfg;
        acfg.lr = lr;
        acfg.weight_decay = 0;
        Adam<float> adam(acfg);
        adam.step(gen.store, t, p);
    };

    run_step(0.0f);
    bool same = true;
    for (const auto& [name, tpar] : gen.store.params) same = same && tpar.v == before.at(name).v;
    CHECK(same);

    run_step(1e-3f);
    double delta = 0;
    for (const auto& [name, tpar] : gen.store.params) {
        const auto& old = before.at(name);
        for (std::size_t i = 0; i < tpar.v.size(); ++i)
            delta += std::abs(static_cast<double>(tpar.v[i]) - old.v[i]);
    }
    CHECK(delta > 0.0);
}

TEST_CASE("training smoke: parameters move and identical seeds give identical curves") {
    const std::string dir = "train_smoke_ds";
    std::filesystem::remove_all(dir);
    synth::synth_dataset(dir, 3, 4242, 32, 64);
    const synth::SceneSet train_set = synth::SceneSet::load(dir, false);
    const synth::SceneSet val_set = synth::SceneSet::load(dir, true);

    net::GeneratorConfig gcfg;
    gcfg.in_h = 32;
    gcfg.in_w = 64;
    gcfg.base_channels = 8;
    gcfg.depths = {1, 1};
    gcfg.bottleneck_depth = 1;
    net::DiscriminatorConfig dcfg;
    dcfg.in_h = 32;
    dcfg.in_w = 64;
    dcfg.base_channels = 8;
    dcfg.stages = 3;

    TrainOptions opts;
    opts.steps = 2;
    opts.batch = 2;
    opts.seed = 11;
    opts.val_every = 0;
    opts.checkpoint_every = 0;

    auto run = [&]() {
        auto gen = net::Generator<float>::build(gcfg, 1);
        auto disc = net::Discriminator<float>::build(dcfg, 2);
        return pano::train::train(gen, disc, train_set, val_set, opts);
    };
    const TrainResult a = run();
    const TrainResult b = run();
    REQUIRE(a.records.size() == 2);
    CHECK_FALSE(a.aborted_nan);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].loss_g == b.records[i].loss_g);
        CHECK(a.records[i].loss_d == b.records[i].loss_d);
        CHECK(a.records[i].l1 == b.records[i].l1);
    }

    // one step changes the generator (non-zero update norm)
    auto gen = net::Generator<float>::build(gcfg, 1);
    auto disc = net::Discriminator<float>::build(dcfg, 2);
    const auto before = gen.store.params;
    TrainOptions one = opts;
    one.steps = 1;
    pano::train::train(gen, disc, train_set, val_set, one);
    double delta = 0;
    for (const auto& [name, tpar] : gen.store.params) {
        const auto& old = before.at(name);
        for (std::size_t i = 0; i < tpar.v.size(); ++i)
            delta += std::abs(static_cast<double>(tpar.v[i]) - old.v[i]);
    }
    CHECK(delta > 0.0);
    std::filesystem::remove_all(dir);
}
