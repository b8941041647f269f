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

#include <optional>
#include <string>
#include <vector>

#include "pano/losses.hpp"
#include "pano/network.hpp"
#include "pano/synth.hpp"

// Adversarial training loop: one critic step then one generator step per
// batch, fixed alternation, single execution context. Deterministic given
// the seed within one build.

namespace pano::train {

enum class GanLossKind { Rals, Logistic };

struct TrainOptions {
    std::int64_t steps = 2000;
    std::int64_t batch = 4;
    std::uint64_t seed = 1;
    double lr_g = 1e-4;
    double lr_d = 4e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double weight_decay = 1e-4;
    LossWeights weights;
    GanLossKind gan_loss = GanLossKind::Rals;
    std::uint64_t extractor_seed = 7;
    std::int64_t checkpoint_every = 500;
    std::int64_t val_every = 50;
    std::int64_t val_pairs = 8;
    std::string out_dir;        // empty: no files written
    bool freeze_discriminator = false;
};

struct LossRecord {
    std::int64_t step;
    double loss_d, loss_g, l1, perc, adv;
};

struct TrainResult {
    std::vector<LossRecord> records;
    std::vector<std::pair<std::int64_t, double>> val_l1;  // (step, value)
    bool aborted_nan = false;
    std::string last_checkpoint;
};

// samples one training example deterministically per (seed, step, slot)
synth::TrainingPair sample_pair(const synth::SceneSet& set, std::uint64_t seed, std::int64_t step,
                                std::int64_t slot);

TrainResult train(net::Generator<float>& gen, net::Discriminator<float>& disc,
                  const synth::SceneSet& train_set, const synth::SceneSet& val_set,
                  const TrainOptions& opts);

// mean generator L1 (compressed domain) over a fixed set of pairs
double validation_l1(const net::Generator<float>& gen,
                     const std::vector<synth::TrainingPair>& pairs);

// deterministic validation pairs from a scene set
std::vector<synth::TrainingPair> make_validation_pairs(const synth::SceneSet& set,
                                                       std::uint64_t seed, std::int64_t count);

// [4,H,W] network input from a masked observation
Tensor<float> pair_input(const synth::TrainingPair& pair);

}  // namespace pano::train
