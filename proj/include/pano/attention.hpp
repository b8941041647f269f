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
#include <string>
#include <vector>

#include "pano/autodiff.hpp"
#include "pano/rng.hpp"

// Window attention over token grids laid out on the ERP sphere. Three
// layers: plain window self-attention, the pano-shifted variant whose shift
// is an exact grid permutation built from the spherical continuation at the
// poles, and pitch cross-attention against the 90-degree-pitched grid.
//
// The pano shift groups the top and bottom half-window bands into "cap"
// windows pairing column blocks c and c+W/2, so every vertically adjacent
// token pair inside a window is a true spherical neighbour and the shift
// inverts exactly. Cap windows attend without the relative-position bias:
// their lattice offsets are not translation-consistent, and skipping the
// bias keeps the layer equivariant to whole-window yaw rolls.

namespace pano::attn {

enum class Variant { Pano, Swin };

struct AttnConfig {
    std::int64_t dim = 32;
    std::int64_t heads = 2;
    std::int64_t window = 8;
    bool rel_pos_bias = true;
    Variant variant = Variant::Pano;

    void validate(std::int64_t h, std::int64_t w) const;
    // shift magnitude: half a window
    std::int64_t shift() const { return window / 2; }
};

template <class T>
struct AttnWeights {
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> bias_table;  // [(2ws-1)^2, heads]; empty when disabled

    static AttnWeights init(Rng& rng, const AttnConfig& cfg) {
        AttnWeights w;
        const auto d = cfg.dim;
        auto mat = [&](std::int64_t r, std::int64_t c) {
            Tensor<T> m({r, c});
            for (auto& x : m.v) x = static_cast<T>(rng.trunc_normal(0.02, 2.0));
            return m;
        };
        w.wq = mat(d, d);
        w.wk = mat(d, d);
        w.wv = mat(d, d);
        w.wo = mat(d, d);
        w.bq = Tensor<T>::zeros({d});
        w.bk = Tensor<T>::zeros({d});
        w.bv = Tensor<T>::zeros({d});
        w.bo = Tensor<T>::zeros({d});
        if (cfg.rel_pos_bias) {
            const std::int64_t ws = cfg.window;
            w.bias_table = mat((2 * ws - 1) * (2 * ws - 1), cfg.heads);
        }
        return w;
    }

    static AttnWeights zeros(const AttnConfig& cfg) {
        AttnWeights w;
        const auto d = cfg.dim;
        w.wq = Tensor<T>::zeros({d, d});
        w.wk = Tensor<T>::zeros({d, d});
        w.wv = Tensor<T>::zeros({d, d});
        w.wo = Tensor<T>::zeros({d, d});
        w.bq = Tensor<T>::zeros({d});
        w.bk = Tensor<T>::zeros({d});
        w.bv = Tensor<T>::zeros({d});
        w.bo = Tensor<T>::zeros({d});
        if (cfg.rel_pos_bias) {
            const std::int64_t ws = cfg.window;
            w.bias_table = Tensor<T>::zeros({(2 * ws - 1) * (2 * ws - 1), cfg.heads});
        }
        return w;
    }
};

template <class T>
struct AttnVars {
    Var<T> wq, bq, wk, bk, wv, bv, wo, bo, bias_table;
};

template <class T>
AttnVars<T> bind(Tape<T>& t, const AttnWeights<T>& w, bool trainable = true) {
    AttnVars<T> v;
    v.wq = t.leaf(w.wq, trainable);
    v.bq = t.leaf(w.bq, trainable);
    v.wk = t.leaf(w.wk, trainable);
    v.bk = t.leaf(w.bk, trainable);
    v.wv = t.leaf(w.wv, trainable);
    v.bv = t.leaf(w.bv, trainable);
    v.wo = t.leaf(w.wo, trainable);
    v.bo = t.leaf(w.bo, trainable);
    if (w.bias_table.numel() > 0) v.bias_table = t.leaf(w.bias_table, trainable);
    return v;
}

// ---- grid layout helpers (plain index machinery, no tape) ----

// relative-position index per ordered token pair of a ws x ws window
std::vector<std::int64_t> rel_pos_index(std::int64_t ws);

// permutation realizing the pano shift: perm[dst_cell] = src_cell for an
// h x w grid rolled right by `shift` columns with pole-cap row regrouping
std::vector<std::int64_t> pano_shift_perm(std::int64_t h, std::int64_t w, std::int64_t shift);
std::vector<std::int64_t> invert_perm(const std::vector<std::int64_t>& perm);

// Precomputed gather indices for the pano-shifted layout. Cap windows (the
// first w/ws windows, band 0) list their keys per query in an order keyed to
// ((col_key - col_query) mod w, row_key); that order follows the content
// under yaw rolls, which keeps the layer equivariant bit for bit.
struct PanoLayout {
    std::int64_t h = 0, w = 0, ws = 0, shift = 0;
    std::int64_t n_cap = 0, n_int = 0, tokens = 0;
    std::vector<std::int64_t> perm, iperm;     // shifted layout <-> grid cells
    std::vector<std::int64_t> q_cap;           // [n_cap * T] source cells
    std::vector<std::int64_t> q_int;           // [n_int * T]
    std::vector<std::int64_t> cap_keys;        // [n_cap * T * T]
};
const PanoLayout& pano_layout(std::int64_t h, std::int64_t w, std::int64_t ws, std::int64_t shift);

// SWIN additive attention mask for a torus roll by (shift, shift): 0 where
// tokens share a pre-roll region, -100 across region boundaries. [nw, T, T]
template <class T>
Tensor<T> swin_attention_mask(std::int64_t h, std::int64_t w, std::int64_t ws, std::int64_t shift);

// PAM window association: default-orientation window -> pitched-grid window
// containing the image of its centre under the 90-degree pitch map.
std::vector<std::int64_t> pam_association(std::int64_t h, std::int64_t w, std::int64_t ws,
                                          double angle_deg = 90.0);

// cached bilinear plan pitching an h x w token grid by angle_deg
const ResamplePlan& pitch_plan(std::int64_t h, std::int64_t w, double angle_deg = 90.0);

// ---- windowing on tape ----

// [h,w,d] -> [nw, ws*ws, d], row-major window tiling
template <class T>
Var<T> window_partition(Var<T> grid, std::int64_t ws) {
    const Shape& s = grid.shape();
    const std::int64_t h = s[0], w = s[1], d = s[2];
    Var<T> x = reshape(grid, {h / ws, ws, w / ws, ws, d});
    x = permute(x, {0, 2, 1, 3, 4});
    return reshape(x, {(h / ws) * (w / ws), ws * ws, d});
}

// inverse of window_partition
template <class T>
Var<T> window_merge(Var<T> windows, std::int64_t h, std::int64_t w, std::int64_t ws) {
    const std::int64_t d = windows.shape()[2];
    Var<T> x = reshape(windows, {h / ws, w / ws, ws, ws, d});
    x = permute(x, {0, 2, 1, 3, 4});
    return reshape(x, {h, w, d});
}

namespace detail {

// scaled dot-product attention over windows; q from `qtok`, k/v from `kvtok`
// ([nw, T, d] each). Optional additive mask [nw,1,T,T].
template <class T>
Var<T> window_attention_core(Var<T> qtok, Var<T> kvtok, const AttnConfig& cfg,
                             const AttnVars<T>& wv, const std::vector<std::int64_t>& bias_index,
                             const Tensor<T>* attn_mask) {
    Tape<T>& t = *qtok.tape;
    const std::int64_t nw = qtok.shape()[0];
    const std::int64_t tq = qtok.shape()[1];
    const std::int64_t tk = kvtok.shape()[1];
    const std::int64_t d = cfg.dim;
    const std::int64_t hds = cfg.heads;
    const std::int64_t dh = d / hds;

    Var<T> q = add(matmul(qtok, wv.wq), wv.bq);
    Var<T> k = add(matmul(kvtok, wv.wk), wv.bk);
    Var<T> v = add(matmul(kvtok, wv.wv), wv.bv);
    q = permute(reshape(q, {nw, tq, hds, dh}), {0, 2, 1, 3});        // [nw,H,Tq,dh]
    Var<T> kt = permute(reshape(k, {nw, tk, hds, dh}), {0, 2, 3, 1});  // [nw,H,dh,Tk]
    Var<T> vv = permute(reshape(v, {nw, tk, hds, dh}), {0, 2, 1, 3});  // [nw,H,Tk,dh]

    Var<T> scores = scale(matmul(q, kt), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));

    if (wv.bias_table.valid() && !bias_index.empty()) {
        Var<T> bias = gather_rows(wv.bias_table, bias_index);        // [T*T, H]
        bias = permute(reshape(bias, {tq, tk, hds}), {2, 0, 1});     // [H,Tq,Tk]
        scores = add(scores, reshape(bias, {1, hds, tq, tk}));
    }
    if (attn_mask) scores = add(scores, constant(t, *attn_mask));    // [nw,1,Tq,Tk]

    Var<T> p = softmax(scores, 3);
    Var<T> out = matmul(p, vv);                                       // [nw,H,Tq,dh]
    out = reshape(permute(out, {0, 2, 1, 3}), {nw, tq, d});
    return add(matmul(out, wv.wo), wv.bo);
}

}  // namespace detail

// window self-attention, no residual
template <class T>
Var<T> w_msa_core(Var<T> grid, const AttnConfig& cfg, const AttnVars<T>& w) {
    const Shape s = grid.shape();
    cfg.validate(s[0], s[1]);
    const std::int64_t ws = cfg.window;
    Var<T> tok = window_partition(grid, ws);
    Var<T> out = detail::window_attention_core(tok, tok, cfg, w, rel_pos_index(ws), static_cast<const Tensor<T>*>(nullptr));
    return window_merge(out, s[0], s[1], ws);
}

// plain window self-attention with residual; no cross-window mixing
template <class T>
Var<T> w_msa(Var<T> grid, const AttnConfig& cfg, const AttnVars<T>& w) {
    return add(grid, w_msa_core(grid, cfg, w));
}

// pano-shifted window attention. The shift is an exact permutation; rows
// entering past a pole are the spherical continuation, and the two pole
// bands form full-window caps, so no attention mask is needed. Cap windows
// use per-query key ordering (see PanoLayout) and no positional bias. The
// Swin variant keeps the classical torus roll plus additive masks (ablation).
template <class T>
Var<T> psw_msa_core(Var<T> grid, const AttnConfig& cfg, const AttnVars<T>& w,
                    std::int64_t shift_override = -1) {
    const Shape s = grid.shape();
    cfg.validate(s[0], s[1]);
    const std::int64_t h = s[0], wd = s[1], d = s[2];
    const std::int64_t ws = cfg.window;
    const std::int64_t k = shift_override >= 0 ? shift_override : cfg.shift();
    if (k == 0 && cfg.variant == Variant::Pano) return w_msa_core(grid, cfg, w);

    if (cfg.variant == Variant::Pano) {
        const PanoLayout& lay = pano_layout(h, wd, ws, k);
        const std::int64_t tt = lay.tokens;
        const std::int64_t hds = cfg.heads, dh = d / hds;
        const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

        Var<T> flat = reshape(grid, {h * wd, d});
        Var<T> q = add(matmul(flat, w.wq), w.bq);
        Var<T> kk = add(matmul(flat, w.wk), w.bk);
        Var<T> vv = add(matmul(flat, w.wv), w.bv);

        // cap windows: per-query ordered keys, no bias
        Var<T> qc = reshape(gather_rows(q, lay.q_cap), {lay.n_cap, tt, hds, dh});
        qc = reshape(permute(qc, {0, 2, 1, 3}), {lay.n_cap, hds, tt, 1, dh});
        Var<T> kc = reshape(gather_rows(kk, lay.cap_keys), {lay.n_cap, tt, tt, hds, dh});
        kc = permute(kc, {0, 3, 1, 2, 4});  // [ncap,H,T,T,dh]
        Var<T> vc = reshape(gather_rows(vv, lay.cap_keys), {lay.n_cap, tt, tt, hds, dh});
        vc = permute(vc, {0, 3, 1, 2, 4});
        Var<T> sc = scale(sum_axis(mul(qc, kc), 4), att_scale);  // [ncap,H,T,T]
        Var<T> pc = softmax(sc, 3);
        Var<T> oc = sum_axis(mul(reshape(pc, {lay.n_cap, hds, tt, tt, 1}), vc), 3);  // [ncap,H,T,dh]
        oc = reshape(permute(oc, {0, 2, 1, 3}), {lay.n_cap, tt, d});

        Var<T> allwin;
        if (lay.n_int > 0) {
            // interior windows: plain batched attention with the bias
            Var<T> qi = reshape(gather_rows(q, lay.q_int), {lay.n_int, tt, d});
            Var<T> ki = reshape(gather_rows(kk, lay.q_int), {lay.n_int, tt, d});
            Var<T> vi = reshape(gather_rows(vv, lay.q_int), {lay.n_int, tt, d});
            Var<T> q4 = permute(reshape(qi, {lay.n_int, tt, hds, dh}), {0, 2, 1, 3});
            Var<T> k4t = permute(reshape(ki, {lay.n_int, tt, hds, dh}), {0, 2, 3, 1});
            Var<T> v4 = permute(reshape(vi, {lay.n_int, tt, hds, dh}), {0, 2, 1, 3});
            Var<T> si = scale(matmul(q4, k4t), att_scale);
            if (w.bias_table.valid()) {
                Var<T> bias = gather_rows(w.bias_table, rel_pos_index(ws));
                bias = reshape(permute(reshape(bias, {tt, tt, hds}), {2, 0, 1}), {1, hds, tt, tt});
                si = add(si, bias);
            }
            Var<T> pi = softmax(si, 3);
            Var<T> oi = reshape(permute(matmul(pi, v4), {0, 2, 1, 3}), {lay.n_int, tt, d});
            allwin = concat(std::vector<Var<T>>{oc, oi}, 0);
        } else {
            allwin = oc;
        }
        Var<T> proj = add(matmul(reshape(allwin, {(lay.n_cap + lay.n_int) * tt, d}), w.wo), w.bo);
        Var<T> merged = window_merge(reshape(proj, {lay.n_cap + lay.n_int, tt, d}), h, wd, ws);
        return reshape(gather_rows(reshape(merged, {h * wd, d}), lay.iperm), {h, wd, d});
    }

    // Swin ablation path: cyclic torus roll + region masks in both axes
    Var<T> rolled = roll(roll(grid, 0, -k), 1, -k);
    Var<T> tok = window_partition(rolled, ws);
    Var<T> out;
    if (k > 0) {
        const Tensor<T> mask = swin_attention_mask<T>(h, wd, ws, k);
        out = detail::window_attention_core(tok, tok, cfg, w, rel_pos_index(ws), &mask);
    } else {
        out = detail::window_attention_core(tok, tok, cfg, w, rel_pos_index(ws), static_cast<const Tensor<T>*>(nullptr));
    }
    Var<T> merged = window_merge(out, h, wd, ws);
    return roll(roll(merged, 1, k), 0, k);
}

template <class T>
Var<T> psw_msa(Var<T> grid, const AttnConfig& cfg, const AttnVars<T>& w,
               std::int64_t shift_override = -1) {
    return add(grid, psw_msa_core(grid, cfg, w, shift_override));
}

// pitch cross-attention: queries from the default orientation, keys/values
// from the associated window of the pitched grid; residual on the default
// orientation. The pitched grid is supplied by the caller (normally
// grid_resample with pitch_plan), which keeps the association testable.
template <class T>
Var<T> pam_core(Var<T> grid, Var<T> pitched, const AttnConfig& cfg, const AttnVars<T>& w,
                const std::vector<std::int64_t>& assoc) {
    const Shape s = grid.shape();
    cfg.validate(s[0], s[1]);
    const std::int64_t ws = cfg.window;
    Var<T> qtok = window_partition(grid, ws);
    Var<T> ptok = window_partition(pitched, ws);
    // gather associated pitched windows into query-window order
    const std::int64_t tt = ws * ws;
    const std::int64_t d = s[2];
    const std::int64_t nw = qtok.shape()[0];
    std::vector<std::int64_t> rowsel;
    rowsel.reserve(static_cast<std::size_t>(nw * tt));
    for (std::int64_t i = 0; i < nw; ++i)
        for (std::int64_t j = 0; j < tt; ++j) rowsel.push_back(assoc[static_cast<std::size_t>(i)] * tt + j);
    Var<T> kvtok = reshape(gather_rows(reshape(ptok, {nw * tt, d}), rowsel), {nw, tt, d});
    // cross-window offsets have no lattice meaning; no positional bias
    Var<T> out = detail::window_attention_core(qtok, kvtok, cfg, w, {}, static_cast<const Tensor<T>*>(nullptr));
    return window_merge(out, s[0], s[1], ws);
}

template <class T>
Var<T> pam(Var<T> grid, Var<T> pitched, const AttnConfig& cfg, const AttnVars<T>& w,
           const std::vector<std::int64_t>& assoc) {
    return add(grid, pam_core(grid, pitched, cfg, w, assoc));
}

}  // namespace pano::attn
