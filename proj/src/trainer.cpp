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

#include "pano/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pano/optim.hpp"

namespace pano::train {

using F = float;

Tensor<F> pair_input(const synth::TrainingPair& pair) {
    const std::int64_t h = pair.input_ldr.h(), w = pair.input_ldr.w();
    Tensor<F> in({4, h, w});
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            const float* px = pair.input_ldr.img.px(r, c);
            for (std::int64_t ch = 0; ch < 3; ++ch)
                in.v[static_cast<std::size_t>((ch * h + r) * w + c)] = px[ch];
            in.v[static_cast<std::size_t>((3 * h + r) * w + c)] = pair.mask.at(r, c, 0);
        }
    return in;
}

synth::TrainingPair sample_pair(const synth::SceneSet& set, std::uint64_t seed, std::int64_t step,
                                std::int64_t slot) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(step) * 1315423911ULL +
                                  static_cast<std::uint64_t>(slot)));
    const std::size_t item = rng.index(set.size());
    const double fov = synth::kFovChoices[rng.index(4)];
    return synth::make_training_pair(set.panorama(item), fov);
}

std::vector<synth::TrainingPair> make_validation_pairs(const synth::SceneSet& set,
                                                       std::uint64_t seed, std::int64_t count) {
    std::vector<synth::TrainingPair> pairs;
    Rng rng(derive_seed(seed, 0x7A11));
    for (std::int64_t i = 0; i < count; ++i) {
        const std::size_t item = rng.index(set.size());
        const double fov = synth::kFovChoices[rng.index(4)];
        pairs.push_back(synth::make_training_pair(set.panorama(item), fov));
    }
    return pairs;
}

double validation_l1(const net::Generator<F>& gen, const std::vector<synth::TrainingPair>& pairs) {
    double total = 0;
    for (const auto& pair : pairs) {
        const Tensor<F> out = gen.infer(pair_input(pair));  // tanh output
        const Tensor<F> gt = net::chw_from_image<F>(pair.gt_compressed.img);
        double acc = 0;
        for (std::int64_t i = 0; i < out.numel(); ++i)
            acc += std::abs(static_cast<double>(out.v[static_cast<std::size_t>(i)]) + 1.0 -
                            gt.v[static_cast<std::size_t>(i)]);
        total += acc / static_cast<double>(out.numel());
    }
    return total / static_cast<double>(pairs.size());
}

namespace {

bool finite(double v) { return std::isfinite(v); }

void write_jsonl(std::ofstream& f, const LossRecord& r) {
    nlohmann::json j;
    j["step"] = r.step;
    j["loss_d"] = r.loss_d;
    j["loss_g"] = r.loss_g;
    j["l1"] = r.l1;
    j["perc"] = r.perc;
    j["adv"] = r.adv;
    f << j.dump() << "\n";
}

}  // namespace

TrainResult train(net::Generator<F>& gen, net::Discriminator<F>& disc,
                  const synth::SceneSet& train_set, const synth::SceneSet& val_set,
                  const TrainOptions& opts) {
    TrainResult result;
    Adam<F>::Config gcfg{static_cast<F>(opts.lr_g), static_cast<F>(opts.beta1),
                         static_cast<F>(opts.beta2), F(1e-8), static_cast<F>(opts.weight_decay)};
    Adam<F>::Config dcfg = gcfg;
    dcfg.lr = static_cast<F>(opts.lr_d);
    Adam<F> adam_g(gcfg), adam_d(dcfg);
    const FeatureExtractor<F> extractor = default_extractor<F>(opts.extractor_seed);

    std::ofstream curve;
    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        curve.open(opts.out_dir + "/losses.jsonl", std::ios::trunc);
    }
    auto save_ck = [&](const std::string& name) {
        if (opts.out_dir.empty()) return std::string{};
        const std::string path = opts.out_dir + "/" + name;
        net::save_checkpoint(path, net::make_checkpoint(gen));
        return path;
    };

    const std::vector<synth::TrainingPair> val_pairs =
        make_validation_pairs(val_set.size() > 0 ? val_set : train_set, opts.seed, opts.val_pairs);
    result.val_l1.emplace_back(0, validation_l1(gen, val_pairs));

    for (std::int64_t step = 0; step < opts.steps; ++step) {
        // assemble the batch
        std::vector<Tensor<F>> inputs, gts;
        for (std::int64_t b = 0; b < opts.batch; ++b) {
            const synth::TrainingPair pair = sample_pair(train_set, opts.seed, step, b);
            inputs.push_back(pair_input(pair));
            gts.push_back(net::chw_from_image<F>(pair.gt_compressed.img));
        }

        Tape<F> tape;
        auto pg = net::bind_params(tape, gen.store, true);

        // generator forward once; compressed output o + 1 in [0, 2]
        std::vector<Var<F>> fakes;
        for (const auto& in : inputs)
            fakes.push_back(add_const(gen.forward(tape, tape.leaf(in, false), pg), F(1)));

        double loss_d_val = 0;
        if (!opts.freeze_discriminator) {
            // ---- critic step on detached fakes ----
            auto pd = net::bind_params(tape, disc.store, true);
            std::vector<Var<F>> dr, df;
            for (std::int64_t b = 0; b < opts.batch; ++b) {
                dr.push_back(disc.forward(tape, tape.leaf(gts[static_cast<std::size_t>(b)], false), pd));
                df.push_back(disc.forward(tape, detach(fakes[static_cast<std::size_t>(b)]), pd));
            }
            Var<F> d_real = concat(dr, 0);
            Var<F> d_fake = concat(df, 0);
            auto [loss_d, loss_g_unused] =
                opts.gan_loss == GanLossKind::Rals ? ralsgan_losses(d_real, d_fake)
                                                   : logistic_gan_losses(d_real, d_fake);
            (void)loss_g_unused;
            loss_d_val = loss_d.val().v[0];
            if (!finite(loss_d_val)) {
                result.aborted_nan = true;
                result.last_checkpoint = save_ck("last_good.ckpt");
                return result;
            }
            tape.backward(loss_d);
            adam_d.step(disc.store, tape, pd);
        }

        // ---- generator step against the updated critic ----
        auto pd2 = net::bind_params(tape, disc.store, false);
        std::vector<Var<F>> dr2, df2;
        for (std::int64_t b = 0; b < opts.batch; ++b) {
            dr2.push_back(disc.forward(tape, tape.leaf(gts[static_cast<std::size_t>(b)], false), pd2));
            df2.push_back(disc.forward(tape, fakes[static_cast<std::size_t>(b)], pd2));
        }
        auto [loss_d2, adv] = opts.gan_loss == GanLossKind::Rals
                                  ? ralsgan_losses(concat(dr2, 0), concat(df2, 0))
                                  : logistic_gan_losses(concat(dr2, 0), concat(df2, 0));
        (void)loss_d2;

        Var<F> l1, perc;
        for (std::int64_t b = 0; b < opts.batch; ++b) {
            Var<F> gtv = tape.leaf(gts[static_cast<std::size_t>(b)], false);
            Var<F> this_l1 = l1_loss(fakes[static_cast<std::size_t>(b)], gtv);
            Var<F> this_perc = perceptual_loss(extractor, fakes[static_cast<std::size_t>(b)], gtv);
            l1 = b == 0 ? this_l1 : add(l1, this_l1);
            perc = b == 0 ? this_perc : add(perc, this_perc);
        }
        l1 = scale(l1, F(1) / static_cast<F>(opts.batch));
        perc = scale(perc, F(1) / static_cast<F>(opts.batch));
        Var<F> loss_g = total_generator_loss(opts.weights, l1, perc, adv);

        const LossRecord rec{step,
                             loss_d_val,
                             static_cast<double>(loss_g.val().v[0]),
                             static_cast<double>(l1.val().v[0]),
                             static_cast<double>(perc.val().v[0]),
                             static_cast<double>(adv.val().v[0])};
        if (!finite(rec.loss_g)) {
            result.aborted_nan = true;
            result.last_checkpoint = save_ck("last_good.ckpt");
            return result;
        }
        tape.backward(loss_g);
        adam_g.step(gen.store, tape, pg);

        result.records.push_back(rec);
        if (curve.is_open()) write_jsonl(curve, rec);
        if (opts.val_every > 0 && (step + 1) % opts.val_every == 0)
            result.val_l1.emplace_back(step + 1, validation_l1(gen, val_pairs));
        if (opts.checkpoint_every > 0 && (step + 1) % opts.checkpoint_every == 0)
            result.last_checkpoint = save_ck("step_" + std::to_string(step + 1) + ".ckpt");
    }
    result.last_checkpoint = save_ck("final.ckpt");
    return result;
}

}  // namespace pano::train
