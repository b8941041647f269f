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

#include <functional>
#include <memory>
#include <vector>

#include "pano/autodiff.hpp"
#include "pano/rng.hpp"

// Training objectives: pixel L1, a per-level perceptual distance over a
// pluggable feature extractor, and the relativistic-average least-squares
// adversarial pair. All generator losses operate in the compressed-HDR
// domain, which keeps bright texels from dominating.

namespace pano::train {

struct LossWeights {
    double l1 = 5.0;
    double perc = 5.0;
    double adv = 0.2;
};

template <class T>
Var<T> l1_loss(Var<T> pred, Var<T> target) {
    check_same_shape(pred.shape(), target.shape(), "l1_loss");
    return mean_all(abs(sub(pred, target)));
}

// levels of a feature stack; shapes must match between the two inputs
template <class T>
using FeatureExtractor = std::function<std::vector<Var<T>>(Var<T>)>;

template <class T>
FeatureExtractor<T> identity_extractor() {
    return [](Var<T> x) { return std::vector<Var<T>>{x}; };
}

// per-level spatial mean of absolute differences, summed over levels
template <class T>
Var<T> perceptual_loss(const FeatureExtractor<T>& extractor, Var<T> pred, Var<T> target) {
    const std::vector<Var<T>> yp = extractor(pred);
    const std::vector<Var<T>> yt = extractor(target);
    if (yp.size() != yt.size()) throw std::invalid_argument("perceptual_loss: level count mismatch");
    Var<T> total;
    for (std::size_t l = 0; l < yp.size(); ++l) {
        check_same_shape(yp[l].shape(), yt[l].shape(), "perceptual_loss level");
        Var<T> lvl = mean_all(abs(sub(yp[l], yt[l])));
        total = l == 0 ? lvl : add(total, lvl);
    }
    return total;
}

namespace detail {

// 2x mean pool of [C,H,W]
template <class T>
Var<T> mean_pool2(Var<T> x) {
    const std::int64_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    Var<T> y = reshape(x, {c, h / 2, 2, w / 2, 2});
    y = mean_axis(y, 4);
    y = mean_axis(y, 2);
    return y;
}

}  // namespace detail

// Default extractor: three Laplacian-pyramid levels, each passed through a
// fixed seeded random 3x3 convolution. A stand-in for pretrained features;
// the objective is extractor-agnostic.
template <class T>
FeatureExtractor<T> default_extractor(std::uint64_t seed, std::int64_t in_channels = 3,
                                      std::int64_t feat_channels = 8) {
    Rng rng(seed);
    auto convs = std::make_shared<std::vector<Tensor<T>>>();
    auto biases = std::make_shared<std::vector<Tensor<T>>>();
    for (int l = 0; l < 3; ++l) {
        Tensor<T> w({feat_channels, in_channels, 3, 3});
        for (auto& v : w.v) v = static_cast<T>(rng.normal(0.0, 0.3));
        convs->push_back(std::move(w));
        biases->push_back(Tensor<T>::zeros({feat_channels}));
    }
    return [convs, biases](Var<T> x) {
        Tape<T>& t = *x.tape;
        if (x.shape().size() != 3)
            throw std::invalid_argument("default_extractor: want [C,H,W], got " + shape_str(x.val().shape));
        Var<T> g0 = x;
        Var<T> g1 = detail::mean_pool2(g0);
        Var<T> g2 = detail::mean_pool2(g1);
        Var<T> lap0 = sub(g0, upsample2x(g1, 1, 2));
        Var<T> lap1 = sub(g1, upsample2x(g2, 1, 2));
        std::vector<Var<T>> levels{lap0, lap1, g2};
        std::vector<Var<T>> feats;
        for (std::size_t l = 0; l < levels.size(); ++l) {
            Var<T> padded = pad(pad(levels[l], 1, 1, 1, PadMode::Zero), 2, 1, 1, PadMode::Zero);
            feats.push_back(conv2d(padded, constant(t, (*convs)[l]), constant(t, (*biases)[l]), 1, 1));
        }
        return feats;
    };
}

// Relativistic-average least squares:
//   loss_D = E[(D(xr) - Ef - 1)^2] + E[(D(xf) - Er + 1)^2]
//   loss_G = E[(D(xf) - Er - 1)^2] + E[(D(xr) - Ef + 1)^2]
template <class T>
std::pair<Var<T>, Var<T>> ralsgan_losses(Var<T> d_real, Var<T> d_fake) {
    Var<T> er = mean_all(d_real);
    Var<T> ef = mean_all(d_fake);
    auto sq = [](Var<T> v) { return mul(v, v); };
    Var<T> loss_d = add(mean_all(sq(add_const(sub(d_real, ef), T(-1)))),
                        mean_all(sq(add_const(sub(d_fake, er), T(1)))));
    Var<T> loss_g = add(mean_all(sq(add_const(sub(d_fake, er), T(-1)))),
                        mean_all(sq(add_const(sub(d_real, ef), T(1)))));
    return {loss_d, loss_g};
}

// classical saturating logistic pair (selectable alternative)
template <class T>
std::pair<Var<T>, Var<T>> logistic_gan_losses(Var<T> d_real, Var<T> d_fake) {
    auto softplus = [](Var<T> x) {
        return log(add_const(exp(clamp(x, T(-30), T(30))), T(1)));
    };
    // log sigma(x) = -softplus(-x), log(1 - sigma(x)) = -softplus(x)
    Var<T> loss_d = add(mean_all(softplus(neg(d_real))), mean_all(softplus(d_fake)));
    // the saturating generator objective: E[log D(xr)] + E[log(1 - D(xf))]
    Var<T> loss_g = neg(add(mean_all(softplus(neg(d_real))), mean_all(softplus(d_fake))));
    return {loss_d, loss_g};
}

template <class T>
Var<T> total_generator_loss(const LossWeights& w, Var<T> l1, Var<T> perc, Var<T> adv) {
    return add(add(scale(l1, static_cast<T>(w.l1)), scale(perc, static_cast<T>(w.perc))),
               scale(adv, static_cast<T>(w.adv)));
}

}  // namespace pano::train
