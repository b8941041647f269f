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

#include <cmath>
#include <map>
#include <string>

#include "pano/network.hpp"

namespace pano::train {

// Adam with L2 weight decay folded into the gradient (coupled form).
template <class T>
class Adam {
  public:
    struct Config {
        T lr = T(1e-4);
        T beta1 = T(0);
        T beta2 = T(0.9);
        T eps = T(1e-8);
        T weight_decay = T(1e-4);
    };

    explicit Adam(Config cfg) : cfg_(cfg) {}

    // applies one step using gradients read from the bound tape vars
    void step(net::ParamStore<T>& store, Tape<T>& tape, const net::BoundParams<T>& bound) {
        ++t_;
        const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
        for (auto& [name, param] : store.params) {
            const auto it = bound.vars.find(name);
            if (it == bound.vars.end()) continue;
            const Tensor<T>& g = tape.node(it->second.id).grad;
            if (g.v.empty()) continue;  // parameter unused by this loss
            auto& [m, v] = state_[name];
            if (m.v.empty()) {
                m = Tensor<T>::zeros(param.shape);
                v = Tensor<T>::zeros(param.shape);
            }
            for (std::int64_t i = 0; i < param.numel(); ++i) {
                const std::size_t k = static_cast<std::size_t>(i);
                const T grad = g.v[k] + cfg_.weight_decay * param.v[k];
                m.v[k] = cfg_.beta1 * m.v[k] + (T(1) - cfg_.beta1) * grad;
                v.v[k] = cfg_.beta2 * v.v[k] + (T(1) - cfg_.beta2) * grad * grad;
                const T mhat = m.v[k] / bc1;
                const T vhat = v.v[k] / bc2;
                param.v[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    std::int64_t steps() const { return t_; }

  private:
    Config cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> state_;
};

}  // namespace pano::train
