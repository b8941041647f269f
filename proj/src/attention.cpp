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

#include "pano/attention.hpp"

#include <algorithm>
#include <map>
#include <tuple>
#include <mutex>
#include <stdexcept>

#include "pano/erp.hpp"

namespace pano::attn {

void AttnConfig::validate(std::int64_t h, std::int64_t w) const {
    if (dim % heads != 0)
        throw std::invalid_argument("attention: dim " + std::to_string(dim) +
                                    " not divisible by heads " + std::to_string(heads));
    if (window < 1) throw std::invalid_argument("attention: window must be positive");
    if (window > 1 && window % 2 != 0)
        throw std::invalid_argument("attention: window " + std::to_string(window) + " must be even");
    if (h % window != 0 || w % window != 0)
        throw std::invalid_argument("attention: window " + std::to_string(window) +
                                    " does not tile grid " + std::to_string(h) + "x" + std::to_string(w));
    if (variant == Variant::Pano && window > 1 && (w / 2) % window != 0)
        throw std::invalid_argument("attention: pano caps need window to tile the half-width " +
                                    std::to_string(w / 2));
}

std::vector<std::int64_t> rel_pos_index(std::int64_t ws) {
    const std::int64_t t = ws * ws;
    const std::int64_t span = 2 * ws - 1;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(t * t));
    for (std::int64_t i = 0; i < t; ++i) {
        const std::int64_t yi = i / ws, xi = i % ws;
        for (std::int64_t j = 0; j < t; ++j) {
            const std::int64_t yj = j / ws, xj = j % ws;
            idx[static_cast<std::size_t>(i * t + j)] = (yi - yj + ws - 1) * span + (xi - xj + ws - 1);
        }
    }
    return idx;
}

// The shifted layout, written as dst <- src over grid cells:
//   band 0, left half:  north caps. rows [0,k) take the spherical
//     continuation (partner block rows k-1..0), rows [k,2k) the own top rows.
//   band 0, right half: south caps, mirrored rule at the bottom pole.
//   bands 1..: interior rows k..h-k-1 shifted down by k.
// Columns are pre-rolled by `shift`. Every cell is used exactly once.
std::vector<std::int64_t> pano_shift_perm(std::int64_t h, std::int64_t w, std::int64_t shift) {
    const std::int64_t k = shift;
    const std::int64_t ws = 2 * k;
    if (k == 0) {
        std::vector<std::int64_t> id(static_cast<std::size_t>(h * w));
        for (std::int64_t i = 0; i < h * w; ++i) id[static_cast<std::size_t>(i)] = i;
        return id;
    }
    if (h % ws != 0 || w % ws != 0 || (w / 2) % ws != 0)
        throw std::invalid_argument("pano_shift_perm: shift " + std::to_string(k) +
                                    " incompatible with grid " + std::to_string(h) + "x" +
                                    std::to_string(w));
    std::vector<std::int64_t> perm(static_cast<std::size_t>(h * w));
    const std::int64_t half = w / 2;
    auto src_col = [&](std::int64_t c) { return ((c - k) % w + w) % w; };  // undo the column roll
    for (std::int64_t rd = 0; rd < h; ++rd)
        for (std::int64_t cd = 0; cd < w; ++cd) {
            std::int64_t rs, cs;  // source in the *unrolled* grid coordinates
            if (rd >= ws) {
                rs = rd - ws + k;  // interior band
                cs = cd;
            } else if (cd < half) {
                // north cap
                if (rd < k) {
                    rs = k - 1 - rd;
                    cs = cd + half;
                } else {
                    rs = rd - k;
                    cs = cd;
                }
            } else {
                // south cap
                if (rd < k) {
                    rs = h - k + rd;
                    cs = cd - half;
                } else {
                    rs = h - 1 - (rd - k);
                    cs = cd;
                }
            }
            perm[static_cast<std::size_t>(rd * w + cd)] = rs * w + src_col(cs);
        }
    return perm;
}

std::vector<std::int64_t> invert_perm(const std::vector<std::int64_t>& perm) {
    std::vector<std::int64_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
        inv[static_cast<std::size_t>(perm[i])] = static_cast<std::int64_t>(i);
    return inv;
}

namespace {

PanoLayout build_pano_layout(std::int64_t h, std::int64_t w, std::int64_t ws, std::int64_t shift) {
    PanoLayout lay;
    lay.h = h;
    lay.w = w;
    lay.ws = ws;
    lay.shift = shift;
    lay.tokens = ws * ws;
    lay.perm = pano_shift_perm(h, w, shift);
    lay.iperm = invert_perm(lay.perm);
    const std::int64_t nww = w / ws, nwh = h / ws;
    lay.n_cap = nww;          // band 0 holds all pole caps
    lay.n_int = (nwh - 1) * nww;
    const std::int64_t t = lay.tokens;

    auto window_cells = [&](std::int64_t wy, std::int64_t wx, std::vector<std::int64_t>& out) {
        for (std::int64_t i = 0; i < ws; ++i)
            for (std::int64_t j = 0; j < ws; ++j)
                out.push_back(lay.perm[static_cast<std::size_t>((wy * ws + i) * w + wx * ws + j)]);
    };

    for (std::int64_t wx = 0; wx < nww; ++wx) window_cells(0, wx, lay.q_cap);
    for (std::int64_t wy = 1; wy < nwh; ++wy)
        for (std::int64_t wx = 0; wx < nww; ++wx) window_cells(wy, wx, lay.q_int);

    // cap keys, per query, ordered by ((col_key - col_query) mod w, row_key):
    // that tuple is invariant under yaw rolls of the content, so the inner
    // summation order follows the tokens and the layer stays bit-equivariant
    lay.cap_keys.reserve(static_cast<std::size_t>(lay.n_cap * t * t));
    std::vector<std::int64_t> members;
    for (std::int64_t wx = 0; wx < nww; ++wx) {
        members.clear();
        window_cells(0, wx, members);
        for (std::int64_t qi = 0; qi < t; ++qi) {
            const std::int64_t qcell = members[static_cast<std::size_t>(qi)];
            const std::int64_t qcol = qcell % w;
            std::vector<std::pair<std::int64_t, std::int64_t>> order;  // (sort key, cell)
            order.reserve(static_cast<std::size_t>(t));
            for (std::int64_t kj = 0; kj < t; ++kj) {
                const std::int64_t cell = members[static_cast<std::size_t>(kj)];
                const std::int64_t dc = ((cell % w - qcol) % w + w) % w;
                order.emplace_back(dc * h + cell / w, cell);
            }
            std::sort(order.begin(), order.end());
            for (const auto& [key, cell] : order) lay.cap_keys.push_back(cell);
        }
    }
    return lay;
}

}  // namespace

const PanoLayout& pano_layout(std::int64_t h, std::int64_t w, std::int64_t ws, std::int64_t shift) {
    static std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t>, PanoLayout> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lk(mu);
    const auto key = std::make_tuple(h, w, ws, shift);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, build_pano_layout(h, w, ws, shift)).first;
    return it->second;
}

template <class T>
Tensor<T> swin_attention_mask(std::int64_t h, std::int64_t w, std::int64_t ws, std::int64_t shift) {
    // Region ids in the rolled layout: after rolling up-left by `shift`, the
    // wrapped content sits in the last `shift` rows/columns and the band
    // before it is the cut lower edge. Tokens may only attend within their
    // region (flat-image semantics; both axes masked).
    std::vector<int> rolled(static_cast<std::size_t>(h * w));
    auto cls = [&](std::int64_t x, std::int64_t n) {
        if (x < n - ws) return 0;
        if (x < n - shift) return 1;
        return 2;
    };
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c)
            rolled[static_cast<std::size_t>(r * w + c)] = cls(r, h) * 3 + cls(c, w);

    const std::int64_t nwh = h / ws, nww = w / ws, t = ws * ws;
    Tensor<T> mask({nwh * nww, 1, t, t});
    for (std::int64_t wy = 0; wy < nwh; ++wy)
        for (std::int64_t wx = 0; wx < nww; ++wx) {
            const std::int64_t widx = wy * nww + wx;
            for (std::int64_t i = 0; i < t; ++i)
                for (std::int64_t j = 0; j < t; ++j) {
                    const std::int64_t ri = wy * ws + i / ws, ci = wx * ws + i % ws;
                    const std::int64_t rj = wy * ws + j / ws, cj = wx * ws + j % ws;
                    const bool same = rolled[static_cast<std::size_t>(ri * w + ci)] ==
                                      rolled[static_cast<std::size_t>(rj * w + cj)];
                    mask.v[static_cast<std::size_t>(((widx * 1 + 0) * t + i) * t + j)] =
                        same ? T(0) : T(-100);
                }
        }
    return mask;
}

template Tensor<float> swin_attention_mask<float>(std::int64_t, std::int64_t, std::int64_t, std::int64_t);
template Tensor<double> swin_attention_mask<double>(std::int64_t, std::int64_t, std::int64_t, std::int64_t);

std::vector<std::int64_t> pam_association(std::int64_t h, std::int64_t w, std::int64_t ws,
                                          double angle_deg) {
    const std::int64_t nwh = h / ws, nww = w / ws;
    std::vector<std::int64_t> assoc(static_cast<std::size_t>(nwh * nww));
    const double a = angle_deg * 3.14159265358979323846 / 180.0;
    for (std::int64_t wy = 0; wy < nwh; ++wy)
        for (std::int64_t wx = 0; wx < nww; ++wx) {
            const double rc = static_cast<double>(wy * ws) + static_cast<double>(ws) / 2.0;
            const double cc = static_cast<double>(wx * ws) + static_cast<double>(ws) / 2.0;
            // a feature at grid point q appears in the pitched grid at
            // dir_to_pix(R(+angle) q)
            const erp::Vec3 moved = erp::rotate_x(erp::coord_to_dir(rc, cc, h, w), a);
            auto [pr, pc] = erp::dir_to_pix(moved, h, w);
            std::int64_t br = static_cast<std::int64_t>(std::floor(pr / static_cast<double>(ws)));
            // exact block boundary: take the window on the equator side
            if (pr == std::floor(pr) && static_cast<std::int64_t>(pr) % ws == 0 && pr > static_cast<double>(h) / 2.0)
                --br;
            br = std::min(std::max<std::int64_t>(br, 0), nwh - 1);
            std::int64_t bc = static_cast<std::int64_t>(std::floor(pc / static_cast<double>(ws))) % nww;
            if (bc < 0) bc += nww;
            assoc[static_cast<std::size_t>(wy * nww + wx)] = br * nww + bc;
        }
    return assoc;
}

const ResamplePlan& pitch_plan(std::int64_t h, std::int64_t w, double angle_deg) {
    static std::map<std::tuple<std::int64_t, std::int64_t, long>, ResamplePlan> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lk(mu);
    const auto key = std::make_tuple(h, w, std::lround(angle_deg * 1000.0));
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, erp::make_pitch_plan(h, w, angle_deg)).first;
    return it->second;
}

}  // namespace pano::attn
