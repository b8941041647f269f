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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <vector>

#include "pano/kernels.hpp"
#include "pano/tensor.hpp"
#include "pano/threadpool.hpp"

// Reverse-mode autodiff over dense tensors. Ops record onto a dynamic tape
// as they execute; Tape::backward walks the record in reverse, so each node
// is visited exactly once and gradients accumulate additively at fan-out.
// Node values are immutable once written.

namespace pano {

template <class T>
class Tape;

template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const { return tape != nullptr; }
    const Tensor<T>& val() const;
    const Tensor<T>& grad() const;
    const Shape& shape() const { return val().shape; }
    std::int64_t numel() const { return val().numel(); }
};

template <class T>
struct TapeNode {
    Tensor<T> value;
    Tensor<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::function<void(Tape<T>&, std::int32_t)> backward;  // (tape, own id)
};

template <class T>
class Tape {
  public:
    Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
        nodes_.push_back(TapeNode<T>{std::move(value), Tensor<T>{}, requires_grad, {}});
        return Var<T>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Var<T> record(Tensor<T> value, bool requires_grad,
                  std::function<void(Tape<T>&, std::int32_t)> backward) {
        nodes_.push_back(TapeNode<T>{std::move(value), Tensor<T>{}, requires_grad,
                                     requires_grad ? std::move(backward)
                                                   : std::function<void(Tape<T>&, std::int32_t)>{}});
        return Var<T>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    TapeNode<T>& node(std::int32_t id) { return nodes_[static_cast<std::size_t>(id)]; }
    const TapeNode<T>& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }
    const Tensor<T>& value(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool needs_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Gradient sink; zero-allocated on first touch.
    Tensor<T>& grad(std::int32_t id) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.v.empty() && n.value.numel() > 0) n.grad = Tensor<T>::zeros(n.value.shape);
        return n.grad;
    }

    void accumulate(std::int32_t id, const Tensor<T>& delta) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad) return;
        Tensor<T>& g = grad(id);
        check_same_shape(g.shape, delta.shape, "grad accumulate");
        kernels::ew_add<T>(g.v.size(), g.data(), delta.data(), g.data());
    }

    // Reverse sweep from a scalar root. Creation order is a topological
    // order, so one reverse pass visits each node exactly once.
    void backward(const Var<T>& root) {
        if (root.tape != this) throw std::invalid_argument("backward: var from another tape");
        const auto& rn = node(root.id);
        if (rn.value.numel() != 1)
            throw std::invalid_argument("backward: root must be scalar, got " + shape_str(rn.value.shape));
        grad(root.id).v[0] = T(1);
        for (std::int32_t i = root.id; i >= 0; --i) {
            auto& n = nodes_[static_cast<std::size_t>(i)];
            if (n.requires_grad && n.backward && !n.grad.v.empty()) n.backward(*this, i);
        }
    }

    std::size_t size() const { return nodes_.size(); }

  private:
    std::deque<TapeNode<T>> nodes_;
};

template <class T>
const Tensor<T>& Var<T>::val() const {
    return tape->value(id);
}
template <class T>
const Tensor<T>& Var<T>::grad() const {
    return tape->node(id).grad;
}

template <class T>
Var<T> constant(Tape<T>& t, Tensor<T> value) {
    return t.leaf(std::move(value), false);
}

template <class T>
Var<T> detach(Var<T> v) {
    return v.tape->leaf(v.val(), false);
}

// ---------------------------------------------------------------------------
// broadcasting helpers

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t nd = std::max(a.size(), b.size());
    Shape out(nd);
    for (std::size_t i = 0; i < nd; ++i) {
        const std::int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        const std::int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) +
                                        " vs " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// strides of `s` viewed as `target` (stride 0 on broadcast axes)
inline std::vector<std::int64_t> broadcast_strides(const Shape& s, const Shape& target) {
    std::vector<std::int64_t> st(target.size(), 0);
    std::int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        const std::size_t ti = target.size() - s.size() + static_cast<std::size_t>(i);
        st[ti] = (s[static_cast<std::size_t>(i)] == 1) ? 0 : acc;
        acc *= s[static_cast<std::size_t>(i)];
    }
    return st;
}

// Iterate a broadcast view: calls f(out_index, a_index, b_index).
template <class F>
void for_each_broadcast(const Shape& os, const Shape& ashape, const Shape& bshape, F&& f) {
    const auto sa = broadcast_strides(ashape, os);
    const auto sb = broadcast_strides(bshape, os);
    const std::size_t nd = os.size();
    std::vector<std::int64_t> coord(nd, 0);
    const std::int64_t n = shape_numel(os);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (int ax = static_cast<int>(nd) - 1; ax >= 0; --ax) {
            const std::size_t x = static_cast<std::size_t>(ax);
            ++coord[x];
            ia += sa[x];
            ib += sb[x];
            if (coord[x] < os[x]) break;
            ia -= sa[x] * os[x];
            ib -= sb[x] * os[x];
            coord[x] = 0;
        }
    }
}

// Run-based variant: calls f(out_base, a_base, b_base, len, a_step, b_step)
// over contiguous segments of the last output axis (steps are 0 or 1), which
// keeps the odometer off the hot inner loop.
template <class F>
void for_each_broadcast_runs(const Shape& os, const Shape& ashape, const Shape& bshape, F&& f) {
    const auto sa = broadcast_strides(ashape, os);
    const auto sb = broadcast_strides(bshape, os);
    const std::size_t nd = os.size();
    const std::int64_t run = os[nd - 1];
    const std::int64_t sa_last = sa[nd - 1];
    const std::int64_t sb_last = sb[nd - 1];
    const std::int64_t outer = shape_numel(os) / run;
    std::vector<std::int64_t> coord(nd, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t o = 0; o < outer; ++o) {
        f(o * run, ia, ib, run, sa_last, sb_last);
        for (int ax = static_cast<int>(nd) - 2; ax >= 0; --ax) {
            const std::size_t x = static_cast<std::size_t>(ax);
            ++coord[x];
            ia += sa[x];
            ib += sb[x];
            if (coord[x] < os[x]) break;
            ia -= sa[x] * os[x];
            ib -= sb[x] * os[x];
            coord[x] = 0;
        }
    }
}

// Sum `g` down to `target` (inverse of broadcasting).
template <class T>
Tensor<T> reduce_to_shape(const Tensor<T>& g, const Shape& target) {
    if (g.shape == target) return g;
    Tensor<T> out = Tensor<T>::zeros(target);
    for_each_broadcast_runs(
        g.shape, target, target,
        [&](std::int64_t gi, std::int64_t oi, std::int64_t, std::int64_t len, std::int64_t ostep,
            std::int64_t) {
            const T* src = g.data() + gi;
            T* dst = out.data() + oi;
            if (ostep == 0) {
                T acc = T(0);
                for (std::int64_t i = 0; i < len; ++i) acc += src[i];
                *dst += acc;
            } else {
                kernels::ew_add<T>(static_cast<std::size_t>(len), dst, src, dst);
            }
        });
    return out;
}

namespace detail {

template <class T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
    if (a.tape != b.tape || a.tape == nullptr)
        throw std::invalid_argument("op: vars from different tapes");
    return *a.tape;
}

template <class T, class FwdFn, class BwdA, class BwdB>
Var<T> binary_op(Var<T> a, Var<T> b, FwdFn&& fwd, BwdA&& dfda, BwdB&& dfdb) {
    Tape<T>& t = same_tape(a, b);
    const auto& av = t.value(a.id);
    const auto& bv = t.value(b.id);
    Tensor<T> out;
    const bool same = av.shape == bv.shape;
    if (same) {
        out = Tensor<T>(av.shape);
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out.v[static_cast<std::size_t>(i)] =
                fwd(av.v[static_cast<std::size_t>(i)], bv.v[static_cast<std::size_t>(i)]);
    } else {
        const Shape os = broadcast_shape(av.shape, bv.shape);
        out = Tensor<T>(os);
        for_each_broadcast_runs(os, av.shape, bv.shape,
                                [&](std::int64_t oi, std::int64_t ia, std::int64_t ib,
                                    std::int64_t len, std::int64_t sa, std::int64_t sb) {
                                    T* dst = out.data() + oi;
                                    const T* pa = av.data() + ia;
                                    const T* pb = bv.data() + ib;
                                    for (std::int64_t i = 0; i < len; ++i)
                                        dst[i] = fwd(pa[i * sa], pb[i * sb]);
                                });
    }
    const bool rg = t.needs_grad(a.id) || t.needs_grad(b.id);
    const auto ai = a.id, bi = b.id;
    return t.record(std::move(out), rg,
                    [ai, bi, dfda, dfdb](Tape<T>& tp, std::int32_t self) {
                        const Tensor<T>& g = tp.node(self).grad;
                        const Tensor<T>& ov = tp.value(self);
                        const Tensor<T>& av2 = tp.value(ai);
                        const Tensor<T>& bv2 = tp.value(bi);
                        if (tp.needs_grad(ai)) {
                            Tensor<T> da(ov.shape);
                            for_each_broadcast_runs(
                                ov.shape, av2.shape, bv2.shape,
                                [&](std::int64_t oi, std::int64_t ia, std::int64_t ib,
                                    std::int64_t len, std::int64_t sa, std::int64_t sb) {
                                    T* dst = da.data() + oi;
                                    const T* gp = g.data() + oi;
                                    const T* pa = av2.data() + ia;
                                    const T* pb = bv2.data() + ib;
                                    for (std::int64_t i = 0; i < len; ++i)
                                        dst[i] = gp[i] * dfda(pa[i * sa], pb[i * sb]);
                                });
                            tp.accumulate(ai, reduce_to_shape(da, av2.shape));
                        }
                        if (tp.needs_grad(bi)) {
                            Tensor<T> db(ov.shape);
                            for_each_broadcast_runs(
                                ov.shape, av2.shape, bv2.shape,
                                [&](std::int64_t oi, std::int64_t ia, std::int64_t ib,
                                    std::int64_t len, std::int64_t sa, std::int64_t sb) {
                                    T* dst = db.data() + oi;
                                    const T* gp = g.data() + oi;
                                    const T* pa = av2.data() + ia;
                                    const T* pb = bv2.data() + ib;
                                    for (std::int64_t i = 0; i < len; ++i)
                                        dst[i] = gp[i] * dfdb(pa[i * sa], pb[i * sb]);
                                });
                            tp.accumulate(bi, reduce_to_shape(db, bv2.shape));
                        }
                    });
}

template <class T, class FwdFn, class BwdFn>
Var<T> unary_op(Var<T> a, FwdFn&& fwd, BwdFn&& dfdx) {
    Tape<T>& t = *a.tape;
    const auto& av = t.value(a.id);
    Tensor<T> out(av.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out.v[static_cast<std::size_t>(i)] = fwd(av.v[static_cast<std::size_t>(i)]);
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai),
                    [ai, dfdx](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ai)) return;
                        const Tensor<T>& g = tp.node(self).grad;
                        const Tensor<T>& xv = tp.value(ai);
                        const Tensor<T>& yv = tp.value(self);
                        Tensor<T>& ga = tp.grad(ai);
                        for (std::int64_t i = 0; i < g.numel(); ++i)
                            ga.v[static_cast<std::size_t>(i)] +=
                                g.v[static_cast<std::size_t>(i)] *
                                dfdx(xv.v[static_cast<std::size_t>(i)], yv.v[static_cast<std::size_t>(i)]);
                    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    // fast same-shape path through the kernel backend
    Tape<T>& t = detail::same_tape(a, b);
    const auto& av = t.value(a.id);
    const auto& bv = t.value(b.id);
    if (av.shape == bv.shape) {
        Tensor<T> out(av.shape);
        kernels::ew_add<T>(out.v.size(), av.data(), bv.data(), out.data());
        const auto ai = a.id, bi = b.id;
        return t.record(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                        [ai, bi](Tape<T>& tp, std::int32_t self) {
                            const Tensor<T>& g = tp.node(self).grad;
                            tp.accumulate(ai, g);
                            tp.accumulate(bi, g);
                        });
    }
    return detail::binary_op(
        a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
    Tape<T>& t = detail::same_tape(a, b);
    const auto& av = t.value(a.id);
    const auto& bv = t.value(b.id);
    if (av.shape == bv.shape) {
        Tensor<T> out(av.shape);
        kernels::ew_sub<T>(out.v.size(), av.data(), bv.data(), out.data());
        const auto ai = a.id, bi = b.id;
        return t.record(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                        [ai, bi](Tape<T>& tp, std::int32_t self) {
                            const Tensor<T>& g = tp.node(self).grad;
                            tp.accumulate(ai, g);
                            if (tp.needs_grad(bi)) {
                                Tensor<T>& gb = tp.grad(bi);
                                kernels::ew_sub<T>(g.v.size(), gb.data(), g.data(), gb.data());
                            }
                        });
    }
    return detail::binary_op(
        a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    Tape<T>& t = detail::same_tape(a, b);
    const auto& av = t.value(a.id);
    const auto& bv = t.value(b.id);
    if (av.shape == bv.shape) {
        Tensor<T> out(av.shape);
        kernels::ew_mul<T>(out.v.size(), av.data(), bv.data(), out.data());
        const auto ai = a.id, bi = b.id;
        return t.record(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                        [ai, bi](Tape<T>& tp, std::int32_t self) {
                            const Tensor<T>& g = tp.node(self).grad;
                            if (tp.needs_grad(ai)) {
                                Tensor<T> da(g.shape);
                                kernels::ew_mul<T>(g.v.size(), g.data(), tp.value(bi).data(), da.data());
                                tp.accumulate(ai, da);
                            }
                            if (tp.needs_grad(bi)) {
                                Tensor<T> db(g.shape);
                                kernels::ew_mul<T>(g.v.size(), g.data(), tp.value(ai).data(), db.data());
                                tp.accumulate(bi, db);
                            }
                        });
    }
    return detail::binary_op(
        a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <class T>
Var<T> div(Var<T> a, Var<T> b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
        [](T x, T y) { return -x / (y * y); });
}

template <class T>
Var<T> neg(Var<T> a) {
    return detail::unary_op(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
    Tape<T>& t = *a.tape;
    Tensor<T> out(t.value(a.id).shape);
    kernels::scale<T>(out.v.size(), s, t.value(a.id).data(), out.data());
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai), [ai, s](Tape<T>& tp, std::int32_t self) {
        if (!tp.needs_grad(ai)) return;
        const Tensor<T>& g = tp.node(self).grad;
        kernels::axpy<T>(g.v.size(), s, g.data(), tp.grad(ai).data());
    });
}

template <class T>
Var<T> add_const(Var<T> a, T c) {
    return detail::unary_op(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> pow(Var<T> a, T p) {
    return detail::unary_op(a, [p](T x) { return std::pow(x, p); },
                            [p](T x, T) { return p * std::pow(x, p - T(1)); });
}

template <class T>
Var<T> exp(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Var<T> sqrt(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::sqrt(x); },
                            [](T, T y) { return T(0.5) / y; });
}

template <class T>
Var<T> abs(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::abs(x); },
                            [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var<T> tanh(Var<T> a) {
    return detail::unary_op(a, [](T x) { return std::tanh(x); },
                            [](T, T y) { return T(1) - y * y; });
}

// exact gelu: x * Phi(x) with the Gaussian CDF
template <class T>
Var<T> gelu(Var<T> a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return detail::unary_op(
        a,
        [](T x) { return T(0.5) * x * (T(1) + T(std::erf(double(x) * inv_sqrt2))); },
        [](T x, T) {
            const double cdf = 0.5 * (1.0 + std::erf(double(x) * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * double(x) * double(x));
            return T(cdf + double(x) * pdf);
        });
}

template <class T>
Var<T> leaky_relu(Var<T> a, T slope) {
    return detail::unary_op(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                            [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> clamp(Var<T> a, T lo, T hi) {
    return detail::unary_op(a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
                            [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <class T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <class T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <class T>
Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }
template <class T>
Var<T> operator/(Var<T> a, Var<T> b) { return div(a, b); }
template <class T>
Var<T> operator*(Var<T> a, T s) { return scale(a, s); }
template <class T>
Var<T> operator*(T s, Var<T> a) { return scale(a, s); }
template <class T>
Var<T> operator-(Var<T> a) { return neg(a); }

// ---------------------------------------------------------------------------
// data movement

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
    Tape<T>& t = *a.tape;
    const auto& av = t.value(a.id);
    // one extent may be -1 (inferred)
    std::int64_t known = 1;
    int infer = -1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw std::invalid_argument("reshape: more than one inferred extent");
            infer = static_cast<int>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0) shape[static_cast<std::size_t>(infer)] = av.numel() / known;
    if (shape_numel(shape) != av.numel())
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(av.shape) +
                                    " -> " + shape_str(shape));
    Tensor<T> out(shape, av.v);
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai), [ai](Tape<T>& tp, std::int32_t self) {
        if (!tp.needs_grad(ai)) return;
        const Tensor<T>& g = tp.node(self).grad;
        Tensor<T>& ga = tp.grad(ai);
        kernels::ew_add<T>(g.v.size(), ga.data(), g.data(), ga.data());
    });
}

namespace detail {

template <class T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<int>& axes) {
    const std::size_t nd = x.shape.size();
    if (axes.size() != nd) throw std::invalid_argument("permute: axes rank mismatch");
    Shape os(nd);
    for (std::size_t i = 0; i < nd; ++i) os[i] = x.shape[static_cast<std::size_t>(axes[i])];
    Tensor<T> out(os);
    const auto xst = x.strides();
    std::vector<std::int64_t> step(nd);
    for (std::size_t i = 0; i < nd; ++i) step[i] = xst[static_cast<std::size_t>(axes[i])];
    // copy whole runs when the last output axis is contiguous in the source
    const std::int64_t run = step[nd - 1] == 1 ? os[nd - 1] : 1;
    const std::int64_t outer = out.numel() / (run > 1 ? run : 1);
    std::vector<std::int64_t> coord(nd, 0);
    std::int64_t xi = 0;
    if (run > 1) {
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy_n(x.data() + xi, run, out.data() + o * run);
            for (int ax = static_cast<int>(nd) - 2; ax >= 0; --ax) {
                const std::size_t u = static_cast<std::size_t>(ax);
                ++coord[u];
                xi += step[u];
                if (coord[u] < os[u]) break;
                xi -= step[u] * os[u];
                coord[u] = 0;
            }
        }
        return out;
    }
    for (std::int64_t oi = 0; oi < out.numel(); ++oi) {
        out.v[static_cast<std::size_t>(oi)] = x.v[static_cast<std::size_t>(xi)];
        for (int ax = static_cast<int>(nd) - 1; ax >= 0; --ax) {
            const std::size_t u = static_cast<std::size_t>(ax);
            ++coord[u];
            xi += step[u];
            if (coord[u] < os[u]) break;
            xi -= step[u] * os[u];
            coord[u] = 0;
        }
    }
    return out;
}

inline std::vector<int> inverse_axes(const std::vector<int>& axes) {
    std::vector<int> inv(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) inv[static_cast<std::size_t>(axes[i])] = static_cast<int>(i);
    return inv;
}

}  // namespace detail

template <class T>
Var<T> permute(Var<T> a, std::vector<int> axes) {
    Tape<T>& t = *a.tape;
    Tensor<T> out = detail::permute_tensor(t.value(a.id), axes);
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai),
                    [ai, axes](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ai)) return;
                        Tensor<T> gperm = detail::permute_tensor(tp.node(self).grad, detail::inverse_axes(axes));
                        tp.accumulate(ai, gperm);
                    });
}

// view of tensor as [outer, axis extent, inner]
inline void axis_split(const Shape& s, int axis, std::int64_t& outer, std::int64_t& len, std::int64_t& inner) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("axis out of range for shape " + shape_str(s));
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
    len = s[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

template <class T>
Var<T> slice(Var<T> a, int axis, std::int64_t start, std::int64_t len) {
    Tape<T>& t = *a.tape;
    const auto& av = t.value(a.id);
    std::int64_t outer, alen, inner;
    axis_split(av.shape, axis, outer, alen, inner);
    if (start < 0 || len < 0 || start + len > alen)
        throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") outside extent " + std::to_string(alen));
    Shape os = av.shape;
    os[static_cast<std::size_t>(axis)] = len;
    Tensor<T> out(os);
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(av.data() + (o * alen + start) * inner, len * inner, out.data() + o * len * inner);
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai),
                    [ai, axis, start, len](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ai)) return;
                        const Tensor<T>& g = tp.node(self).grad;
                        Tensor<T>& ga = tp.grad(ai);
                        std::int64_t outer2, alen2, inner2;
                        axis_split(ga.shape, axis, outer2, alen2, inner2);
                        for (std::int64_t o = 0; o < outer2; ++o) {
                            const T* gs = g.data() + o * len * inner2;
                            T* gd = ga.data() + (o * alen2 + start) * inner2;
                            kernels::ew_add<T>(static_cast<std::size_t>(len * inner2), gd, gs, gd);
                        }
                    });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    Tape<T>& t = *parts[0].tape;
    Shape os = t.value(parts[0].id).shape;
    std::int64_t total = 0;
    for (const auto& p : parts) {
        const auto& s = t.value(p.id).shape;
        if (s.size() != os.size())
            throw std::invalid_argument("concat: rank mismatch " + shape_str(os) + " vs " + shape_str(s));
        for (std::size_t i = 0; i < s.size(); ++i)
            if (static_cast<int>(i) != axis && s[i] != os[i])
                throw std::invalid_argument("concat: shape mismatch " + shape_str(os) + " vs " + shape_str(s));
        total += s[static_cast<std::size_t>(axis)];
    }
    os[static_cast<std::size_t>(axis)] = total;
    Tensor<T> out(os);
    std::int64_t outer, olen, inner;
    axis_split(os, axis, outer, olen, inner);
    std::vector<std::int64_t> lens;
    std::vector<std::int32_t> ids;
    bool rg = false;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        const auto& pv = t.value(p.id);
        const std::int64_t plen = pv.shape[static_cast<std::size_t>(axis)];
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(pv.data() + o * plen * inner, plen * inner,
                        out.data() + (o * olen + off) * inner);
        off += plen;
        lens.push_back(plen);
        ids.push_back(p.id);
        rg = rg || t.needs_grad(p.id);
    }
    return t.record(std::move(out), rg,
                    [ids, lens, axis](Tape<T>& tp, std::int32_t self) {
                        const Tensor<T>& g = tp.node(self).grad;
                        std::int64_t outer2, olen2, inner2;
                        axis_split(g.shape, axis, outer2, olen2, inner2);
                        std::int64_t off2 = 0;
                        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
                            if (tp.needs_grad(ids[pi])) {
                                Tensor<T>& ga = tp.grad(ids[pi]);
                                for (std::int64_t o = 0; o < outer2; ++o) {
                                    const T* gs = g.data() + (o * olen2 + off2) * inner2;
                                    T* gd = ga.data() + o * lens[pi] * inner2;
                                    kernels::ew_add<T>(static_cast<std::size_t>(lens[pi] * inner2), gd, gs, gd);
                                }
                            }
                            off2 += lens[pi];
                        }
                    });
}

// circular roll: content at index i moves to (i + shift) mod extent
template <class T>
Var<T> roll(Var<T> a, int axis, std::int64_t shift) {
    Tape<T>& t = *a.tape;
    const auto& av = t.value(a.id);
    std::int64_t outer, len, inner;
    axis_split(av.shape, axis, outer, len, inner);
    const std::int64_t s = ((shift % len) + len) % len;
    Tensor<T> out(av.shape);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t p = 0; p < len; ++p) {
            const std::int64_t src = (p - s + len) % len;
            std::copy_n(av.data() + (o * len + src) * inner, inner, out.data() + (o * len + p) * inner);
        }
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai),
                    [ai, axis, s](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ai)) return;
                        const Tensor<T>& g = tp.node(self).grad;
                        Tensor<T>& ga = tp.grad(ai);
                        std::int64_t outer2, len2, inner2;
                        axis_split(g.shape, axis, outer2, len2, inner2);
                        for (std::int64_t o = 0; o < outer2; ++o)
                            for (std::int64_t p = 0; p < len2; ++p) {
                                const std::int64_t src = (p - s + len2) % len2;
                                const T* gs = g.data() + (o * len2 + p) * inner2;
                                T* gd = ga.data() + (o * len2 + src) * inner2;
                                kernels::ew_add<T>(static_cast<std::size_t>(inner2), gd, gs, gd);
                            }
                    });
}

enum class PadMode { Zero, Circular, Reflect };

// source index along one axis for padded position p (-1 means zero fill);
// Reflect mirrors without repeating the edge sample.
inline std::int64_t pad_src_index(std::int64_t p, std::int64_t before, std::int64_t len, PadMode mode) {
    std::int64_t s = p - before;
    if (s >= 0 && s < len) return s;
    switch (mode) {
        case PadMode::Zero:
            return -1;
        case PadMode::Circular:
            return ((s % len) + len) % len;
        case PadMode::Reflect: {
            if (len == 1) return 0;
            const std::int64_t period = 2 * (len - 1);
            s = ((s % period) + period) % period;
            return s < len ? s : period - s;
        }
    }
    return -1;
}

template <class T>
Var<T> pad(Var<T> a, int axis, std::int64_t before, std::int64_t after, PadMode mode) {
    Tape<T>& t = *a.tape;
    const auto& av = t.value(a.id);
    std::int64_t outer, len, inner;
    axis_split(av.shape, axis, outer, len, inner);
    Shape os = av.shape;
    os[static_cast<std::size_t>(axis)] = len + before + after;
    const std::int64_t olen = len + before + after;
    std::vector<std::int64_t> srcmap(static_cast<std::size_t>(olen));
    for (std::int64_t p = 0; p < olen; ++p)
        srcmap[static_cast<std::size_t>(p)] = pad_src_index(p, before, len, mode);
    Tensor<T> out(os);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t p = 0; p < olen; ++p) {
            const std::int64_t s = srcmap[static_cast<std::size_t>(p)];
            T* dst = out.data() + (o * olen + p) * inner;
            if (s < 0)
                std::fill_n(dst, inner, T(0));
            else
                std::copy_n(av.data() + (o * len + s) * inner, inner, dst);
        }
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai),
                    [ai, axis, srcmap](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ai)) return;
                        const Tensor<T>& g = tp.node(self).grad;
                        Tensor<T>& ga = tp.grad(ai);
                        std::int64_t outer2, len2, inner2;
                        axis_split(ga.shape, axis, outer2, len2, inner2);
                        const std::int64_t olen2 = static_cast<std::int64_t>(srcmap.size());
                        for (std::int64_t o = 0; o < outer2; ++o)
                            for (std::int64_t p = 0; p < olen2; ++p) {
                                const std::int64_t s = srcmap[static_cast<std::size_t>(p)];
                                if (s < 0) continue;
                                const T* gs = g.data() + (o * olen2 + p) * inner2;
                                T* gd = ga.data() + (o * len2 + s) * inner2;
                                kernels::ew_add<T>(static_cast<std::size_t>(inner2), gd, gs, gd);
                            }
                    });
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
Var<T> sum_all(Var<T> a) {
    Tape<T>& t = *a.tape;
    const auto& av = t.value(a.id);
    T acc = T(0);
    for (auto x : av.v) acc += x;
    const auto ai = a.id;
    return t.record(Tensor<T>::scalar(acc), t.needs_grad(ai),
                    [ai](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ai)) return;
                        const T g = tp.node(self).grad.v[0];
                        Tensor<T>& ga = tp.grad(ai);
                        for (auto& x : ga.v) x += g;
                    });
}

template <class T>
Var<T> mean_all(Var<T> a) {
    const T n = static_cast<T>(a.numel());
    return scale(sum_all(a), T(1) / n);
}

template <class T>
Var<T> sum_axis(Var<T> a, int axis, bool keepdim = false) {
    Tape<T>& t = *a.tape;
    const auto& av = t.value(a.id);
    std::int64_t outer, len, inner;
    axis_split(av.shape, axis, outer, len, inner);
    Shape os = av.shape;
    if (keepdim)
        os[static_cast<std::size_t>(axis)] = 1;
    else
        os.erase(os.begin() + axis);
    if (os.empty()) os = {1};
    Tensor<T> out(os);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t p = 0; p < len; ++p) {
            const T* src = av.data() + (o * len + p) * inner;
            T* dst = out.data() + o * inner;
            for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai),
                    [ai, axis](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ai)) return;
                        const Tensor<T>& g = tp.node(self).grad;
                        Tensor<T>& ga = tp.grad(ai);
                        std::int64_t outer2, len2, inner2;
                        axis_split(ga.shape, axis, outer2, len2, inner2);
                        for (std::int64_t o = 0; o < outer2; ++o)
                            for (std::int64_t p = 0; p < len2; ++p) {
                                T* gd = ga.data() + (o * len2 + p) * inner2;
                                const T* gs = g.data() + o * inner2;
                                kernels::ew_add<T>(static_cast<std::size_t>(inner2), gd, gs, gd);
                            }
                    });
}

template <class T>
Var<T> mean_axis(Var<T> a, int axis, bool keepdim = false) {
    const T n = static_cast<T>(a.shape()[static_cast<std::size_t>(axis)]);
    return scale(sum_axis(a, axis, keepdim), T(1) / n);
}

// ---------------------------------------------------------------------------
// matmul (batched, broadcasting a 2-D operand over the other's batch)

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    Tape<T>& t = detail::same_tape(a, b);
    const auto& av = t.value(a.id);
    const auto& bv = t.value(b.id);
    if (av.ndim() < 2 || bv.ndim() < 2)
        throw std::invalid_argument("matmul: need rank>=2, got " + shape_str(av.shape) + " and " +
                                    shape_str(bv.shape));
    const std::int64_t m = av.shape[av.shape.size() - 2];
    const std::int64_t k = av.shape[av.shape.size() - 1];
    const std::int64_t kb = bv.shape[bv.shape.size() - 2];
    const std::int64_t n = bv.shape[bv.shape.size() - 1];
    if (k != kb)
        throw std::invalid_argument("matmul: inner extent mismatch " + shape_str(av.shape) +
                                    " x " + shape_str(bv.shape));
    Shape abatch(av.shape.begin(), av.shape.end() - 2);
    Shape bbatch(bv.shape.begin(), bv.shape.end() - 2);
    if (!abatch.empty() && !bbatch.empty() && abatch != bbatch)
        throw std::invalid_argument("matmul: batch mismatch " + shape_str(av.shape) + " x " +
                                    shape_str(bv.shape));
    const Shape batch = abatch.empty() ? bbatch : abatch;
    const std::int64_t nb = shape_numel(batch);
    const bool a_b = !abatch.empty();
    const bool b_b = !bbatch.empty();

    Shape os = batch;
    os.push_back(m);
    os.push_back(n);
    Tensor<T> out(os);
    if (nb == 1) {
        kernels::gemm_mt<T>(static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                            static_cast<std::size_t>(k), av.data(), bv.data(), out.data(), false);
    } else {
        const auto work = [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                kernels::gemm<T>(static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                                 static_cast<std::size_t>(k),
                                 av.data() + (a_b ? static_cast<std::int64_t>(i) * m * k : 0),
                                 bv.data() + (b_b ? static_cast<std::int64_t>(i) * k * n : 0),
                                 out.data() + static_cast<std::int64_t>(i) * m * n, false);
            }
        };
        if (nb * m * n * k >= (1 << 18))
            ThreadPool::global().parallel_for(0, static_cast<std::size_t>(nb), work);
        else
            work(0, static_cast<std::size_t>(nb));
    }

    const auto ai = a.id, bi = b.id;
    return t.record(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                    [ai, bi, m, n, k, nb, a_b, b_b](Tape<T>& tp, std::int32_t self) {
                        const Tensor<T>& g = tp.node(self).grad;
                        const Tensor<T>& av2 = tp.value(ai);
                        const Tensor<T>& bv2 = tp.value(bi);
                        if (tp.needs_grad(ai)) {
                            Tensor<T>& ga = tp.grad(ai);
                            // dA = g . B^T
                            for (std::int64_t i = 0; i < nb; ++i) {
                                const T* bp = bv2.data() + (b_b ? i * k * n : 0);
                                Tensor<T> bt({n, k});
                                for (std::int64_t r = 0; r < k; ++r)
                                    for (std::int64_t c = 0; c < n; ++c)
                                        bt.v[static_cast<std::size_t>(c * k + r)] = bp[r * n + c];
                                kernels::gemm<T>(static_cast<std::size_t>(m), static_cast<std::size_t>(k),
                                                 static_cast<std::size_t>(n), g.data() + i * m * n,
                                                 bt.data(), ga.data() + (a_b ? i * m * k : 0), true);
                            }
                        }
                        if (tp.needs_grad(bi)) {
                            Tensor<T>& gb = tp.grad(bi);
                            // dB = A^T . g
                            for (std::int64_t i = 0; i < nb; ++i) {
                                const T* ap = av2.data() + (a_b ? i * m * k : 0);
                                Tensor<T> at({k, m});
                                for (std::int64_t r = 0; r < m; ++r)
                                    for (std::int64_t c = 0; c < k; ++c)
                                        at.v[static_cast<std::size_t>(c * m + r)] = ap[r * k + c];
                                kernels::gemm<T>(static_cast<std::size_t>(k), static_cast<std::size_t>(n),
                                                 static_cast<std::size_t>(m), at.data(), g.data() + i * m * n,
                                                 gb.data() + (b_b ? i * k * n : 0), true);
                            }
                        }
                    });
}

// ---------------------------------------------------------------------------
// softmax / layer norm

template <class T>
Var<T> softmax(Var<T> a, int axis) {
    Tape<T>& t = *a.tape;
    const auto& av = t.value(a.id);
    std::int64_t outer, len, inner;
    axis_split(av.shape, axis, outer, len, inner);
    Tensor<T> out(av.shape);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
            const std::int64_t base = o * len * inner + i;
            T mx = av.v[static_cast<std::size_t>(base)];
            for (std::int64_t p = 1; p < len; ++p)
                mx = std::max(mx, av.v[static_cast<std::size_t>(base + p * inner)]);
            T sum = T(0);
            for (std::int64_t p = 0; p < len; ++p) {
                const T e = std::exp(av.v[static_cast<std::size_t>(base + p * inner)] - mx);
                out.v[static_cast<std::size_t>(base + p * inner)] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (std::int64_t p = 0; p < len; ++p)
                out.v[static_cast<std::size_t>(base + p * inner)] *= inv;
        }
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai),
                    [ai, axis](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ai)) return;
                        const Tensor<T>& g = tp.node(self).grad;
                        const Tensor<T>& y = tp.value(self);
                        Tensor<T>& ga = tp.grad(ai);
                        std::int64_t outer2, len2, inner2;
                        axis_split(y.shape, axis, outer2, len2, inner2);
                        for (std::int64_t o = 0; o < outer2; ++o)
                            for (std::int64_t i = 0; i < inner2; ++i) {
                                const std::int64_t base = o * len2 * inner2 + i;
                                T dot = T(0);
                                for (std::int64_t p = 0; p < len2; ++p) {
                                    const std::size_t idx = static_cast<std::size_t>(base + p * inner2);
                                    dot += g.v[idx] * y.v[idx];
                                }
                                for (std::int64_t p = 0; p < len2; ++p) {
                                    const std::size_t idx = static_cast<std::size_t>(base + p * inner2);
                                    ga.v[idx] += y.v[idx] * (g.v[idx] - dot);
                                }
                            }
                    });
}

// layer norm over the last axis, with affine scale/shift
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
    Tape<T>& t = *x.tape;
    const auto& xv = t.value(x.id);
    const std::int64_t d = xv.shape.back();
    const std::int64_t rows = xv.numel() / d;
    const auto& gv = t.value(gamma.id);
    const auto& bv = t.value(beta.id);
    if (gv.numel() != d || bv.numel() != d)
        throw std::invalid_argument("layer_norm: affine params " + shape_str(gv.shape) + "/" +
                                    shape_str(bv.shape) + " do not match last extent " + std::to_string(d));
    Tensor<T> out(xv.shape);
    std::vector<T> mean(static_cast<std::size_t>(rows)), inv(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* px = xv.data() + r * d;
        T mu = T(0);
        for (std::int64_t i = 0; i < d; ++i) mu += px[i];
        mu /= static_cast<T>(d);
        T var = T(0);
        for (std::int64_t i = 0; i < d; ++i) var += (px[i] - mu) * (px[i] - mu);
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + eps);
        mean[static_cast<std::size_t>(r)] = mu;
        inv[static_cast<std::size_t>(r)] = is;
        T* po = out.data() + r * d;
        for (std::int64_t i = 0; i < d; ++i)
            po[i] = (px[i] - mu) * is * gv.v[static_cast<std::size_t>(i)] + bv.v[static_cast<std::size_t>(i)];
    }
    const auto xi = x.id, gi = gamma.id, bi = beta.id;
    const bool rg = t.needs_grad(xi) || t.needs_grad(gi) || t.needs_grad(bi);
    return t.record(std::move(out), rg,
                    [xi, gi, bi, d, rows, mean, inv](Tape<T>& tp, std::int32_t self) {
                        const Tensor<T>& g = tp.node(self).grad;
                        const Tensor<T>& xv2 = tp.value(xi);
                        const Tensor<T>& gv2 = tp.value(gi);
                        const bool nx = tp.needs_grad(xi), ng = tp.needs_grad(gi), nb = tp.needs_grad(bi);
                        Tensor<T>* gx = nx ? &tp.grad(xi) : nullptr;
                        Tensor<T>* gg = ng ? &tp.grad(gi) : nullptr;
                        Tensor<T>* gb = nb ? &tp.grad(bi) : nullptr;
                        for (std::int64_t r = 0; r < rows; ++r) {
                            const T* px = xv2.data() + r * d;
                            const T* pg = g.data() + r * d;
                            const T mu = mean[static_cast<std::size_t>(r)];
                            const T is = inv[static_cast<std::size_t>(r)];
                            T s1 = T(0), s2 = T(0);
                            for (std::int64_t i = 0; i < d; ++i) {
                                const T xh = (px[i] - mu) * is;
                                const T dg = pg[i] * gv2.v[static_cast<std::size_t>(i)];
                                s1 += dg;
                                s2 += dg * xh;
                                if (gg) gg->v[static_cast<std::size_t>(i)] += pg[i] * xh;
                                if (gb) gb->v[static_cast<std::size_t>(i)] += pg[i];
                            }
                            if (gx) {
                                s1 /= static_cast<T>(d);
                                s2 /= static_cast<T>(d);
                                T* pgx = gx->data() + r * d;
                                for (std::int64_t i = 0; i < d; ++i) {
                                    const T xh = (px[i] - mu) * is;
                                    const T dg = pg[i] * gv2.v[static_cast<std::size_t>(i)];
                                    pgx[i] += is * (dg - s1 - xh * s2);
                                }
                            }
                        }
                    });
}

// ---------------------------------------------------------------------------
// conv2d (valid, strided; pad separately) + nearest upsample

namespace detail {

// x: [C,H,W] -> col: [C*kh*kw, Ho*Wo]
template <class T>
void im2col(const T* x, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t sh, std::int64_t sw, std::int64_t ho, std::int64_t wo,
            T* col) {
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t ky = 0; ky < kh; ++ky)
            for (std::int64_t kx = 0; kx < kw; ++kx) {
                T* dst = col + ((ci * kh + ky) * kw + kx) * (ho * wo);
                const T* src = x + ci * h * w;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t iy = oy * sh + ky;
                    const T* srow = src + iy * w + kx;
                    for (std::int64_t ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = srow[ox * sw];
                }
            }
}

template <class T>
void col2im_add(const T* col, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, std::int64_t sh, std::int64_t sw, std::int64_t ho, std::int64_t wo,
                T* x) {
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t ky = 0; ky < kh; ++ky)
            for (std::int64_t kx = 0; kx < kw; ++kx) {
                const T* src = col + ((ci * kh + ky) * kw + kx) * (ho * wo);
                T* dst = x + ci * h * w;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t iy = oy * sh + ky;
                    T* drow = dst + iy * w + kx;
                    for (std::int64_t ox = 0; ox < wo; ++ox) drow[ox * sw] += src[oy * wo + ox];
                }
            }
}

}  // namespace detail

// x [Ci,H,W] * w [Co,Ci,kh,kw] + b [Co] -> [Co,Ho,Wo]; valid, stride (sh,sw)
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, std::int64_t sh, std::int64_t sw) {
    Tape<T>& t = *x.tape;
    const auto& xv = t.value(x.id);
    const auto& wv = t.value(w.id);
    const auto& bv = t.value(b.id);
    if (xv.ndim() != 3 || wv.ndim() != 4)
        throw std::invalid_argument("conv2d: want x[C,H,W], w[Co,Ci,kh,kw]; got " +
                                    shape_str(xv.shape) + " and " + shape_str(wv.shape));
    const std::int64_t ci = xv.shape[0], h = xv.shape[1], wd = xv.shape[2];
    const std::int64_t co = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
    if (wv.shape[1] != ci)
        throw std::invalid_argument("conv2d: channel mismatch " + shape_str(xv.shape) + " vs " +
                                    shape_str(wv.shape));
    if (bv.numel() != co)
        throw std::invalid_argument("conv2d: bias " + shape_str(bv.shape) + " vs Co=" + std::to_string(co));
    if (h < kh || wd < kw)
        throw std::invalid_argument("conv2d: kernel larger than input " + shape_str(xv.shape));
    const std::int64_t ho = (h - kh) / sh + 1;
    const std::int64_t wo = (wd - kw) / sw + 1;
    const std::int64_t kdim = ci * kh * kw;

    Tensor<T> col({kdim, ho * wo});
    detail::im2col(xv.data(), ci, h, wd, kh, kw, sh, sw, ho, wo, col.data());
    Tensor<T> out({co, ho, wo});
    kernels::gemm_mt<T>(static_cast<std::size_t>(co), static_cast<std::size_t>(ho * wo),
                        static_cast<std::size_t>(kdim), wv.data(), col.data(), out.data(), false);
    for (std::int64_t c = 0; c < co; ++c) {
        T* p = out.data() + c * ho * wo;
        const T bc = bv.v[static_cast<std::size_t>(c)];
        for (std::int64_t i = 0; i < ho * wo; ++i) p[i] += bc;
    }
    const auto xi = x.id, wi = w.id, bi = b.id;
    const bool rg = t.needs_grad(xi) || t.needs_grad(wi) || t.needs_grad(bi);
    auto colp = std::make_shared<Tensor<T>>(std::move(col));
    return t.record(std::move(out), rg,
                    [xi, wi, bi, ci, h, wd, co, kh, kw, sh, sw, ho, wo, kdim, colp](
                        Tape<T>& tp, std::int32_t self) {
                        const Tensor<T>& g = tp.node(self).grad;  // [co, ho, wo]
                        if (tp.needs_grad(bi)) {
                            Tensor<T>& gb = tp.grad(bi);
                            for (std::int64_t c = 0; c < co; ++c) {
                                T acc = T(0);
                                const T* p = g.data() + c * ho * wo;
                                for (std::int64_t i = 0; i < ho * wo; ++i) acc += p[i];
                                gb.v[static_cast<std::size_t>(c)] += acc;
                            }
                        }
                        if (tp.needs_grad(wi)) {
                            // dW = g[co, HoWo] . col^T[HoWo, kdim]
                            Tensor<T> colt({ho * wo, kdim});
                            for (std::int64_t r = 0; r < kdim; ++r)
                                for (std::int64_t c = 0; c < ho * wo; ++c)
                                    colt.v[static_cast<std::size_t>(c * kdim + r)] =
                                        colp->v[static_cast<std::size_t>(r * (ho * wo) + c)];
                            kernels::gemm_mt<T>(static_cast<std::size_t>(co), static_cast<std::size_t>(kdim),
                                                static_cast<std::size_t>(ho * wo), g.data(), colt.data(),
                                                tp.grad(wi).data(), true);
                        }
                        if (tp.needs_grad(xi)) {
                            // dcol = W^T[kdim, co] . g[co, HoWo]
                            const Tensor<T>& wv2 = tp.value(wi);
                            Tensor<T> wt({kdim, co});
                            for (std::int64_t r = 0; r < co; ++r)
                                for (std::int64_t c = 0; c < kdim; ++c)
                                    wt.v[static_cast<std::size_t>(c * co + r)] =
                                        wv2.v[static_cast<std::size_t>(r * kdim + c)];
                            Tensor<T> dcol({kdim, ho * wo});
                            kernels::gemm_mt<T>(static_cast<std::size_t>(kdim),
                                                static_cast<std::size_t>(ho * wo),
                                                static_cast<std::size_t>(co), wt.data(), g.data(),
                                                dcol.data(), false);
                            detail::col2im_add(dcol.data(), ci, h, wd, kh, kw, sh, sw, ho, wo,
                                               tp.grad(xi).data());
                        }
                    });
}

// nearest-neighbour 2x upsample of two adjacent axes; the tensor is viewed
// as [outer, H, W, inner]
template <class T>
Var<T> upsample2x(Var<T> a, int axis_h, int axis_w) {
    Tape<T>& t = *a.tape;
    const auto& av = t.value(a.id);
    if (axis_w != axis_h + 1)
        throw std::invalid_argument("upsample2x: axes must be adjacent (h, h+1)");
    Shape os = av.shape;
    os[static_cast<std::size_t>(axis_h)] *= 2;
    os[static_cast<std::size_t>(axis_w)] *= 2;
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis_h; ++i) outer *= av.shape[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis_w) + 1; i < av.shape.size(); ++i)
        inner *= av.shape[i];
    const std::int64_t ih = av.shape[static_cast<std::size_t>(axis_h)];
    const std::int64_t iw = av.shape[static_cast<std::size_t>(axis_w)];

    Tensor<T> out(os);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t r = 0; r < ih; ++r) {
            // widen one source row, then emit it twice
            T* row0 = out.data() + ((o * 2 * ih + 2 * r) * 2 * iw) * inner;
            const T* src = av.data() + ((o * ih + r) * iw) * inner;
            for (std::int64_t c = 0; c < iw; ++c) {
                std::copy_n(src + c * inner, inner, row0 + (2 * c) * inner);
                std::copy_n(src + c * inner, inner, row0 + (2 * c + 1) * inner);
            }
            std::copy_n(row0, 2 * iw * inner, row0 + 2 * iw * inner);
        }
    const auto ai = a.id;
    return t.record(std::move(out), t.needs_grad(ai),
                    [ai, outer, ih, iw, inner](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ai)) return;
                        const Tensor<T>& g = tp.node(self).grad;
                        Tensor<T>& ga = tp.grad(ai);
                        for (std::int64_t o = 0; o < outer; ++o)
                            for (std::int64_t r2 = 0; r2 < 2 * ih; ++r2) {
                                const T* grow = g.data() + ((o * 2 * ih + r2) * 2 * iw) * inner;
                                T* dst = ga.data() + ((o * ih + r2 / 2) * iw) * inner;
                                for (std::int64_t c2 = 0; c2 < 2 * iw; ++c2)
                                    kernels::ew_add<T>(static_cast<std::size_t>(inner),
                                                       dst + (c2 / 2) * inner, grow + c2 * inner,
                                                       dst + (c2 / 2) * inner);
                            }
                    });
}

// ---------------------------------------------------------------------------
// gathers

// out[i, :] = table[idx[i], :]
template <class T>
Var<T> gather_rows(Var<T> table, std::vector<std::int64_t> idx) {
    Tape<T>& t = *table.tape;
    const auto& tv = t.value(table.id);
    if (tv.ndim() != 2) throw std::invalid_argument("gather_rows: table must be 2-D, got " + shape_str(tv.shape));
    const std::int64_t rows = tv.shape[0], cols = tv.shape[1];
    Tensor<T> out({static_cast<std::int64_t>(idx.size()), cols});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= rows) throw std::invalid_argument("gather_rows: index out of range");
        std::copy_n(tv.data() + idx[i] * cols, cols, out.data() + static_cast<std::int64_t>(i) * cols);
    }
    const auto ti = table.id;
    return t.record(std::move(out), t.needs_grad(ti),
                    [ti, idx, cols](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(ti)) return;
                        const Tensor<T>& g = tp.node(self).grad;
                        Tensor<T>& gt = tp.grad(ti);
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                            T* gd = gt.data() + idx[i] * cols;
                            const T* gs = g.data() + static_cast<std::int64_t>(i) * cols;
                            kernels::ew_add<T>(static_cast<std::size_t>(cols), gd, gs, gd);
                        }
                    });
}

// Fixed sparse linear resampling over the leading spatial cells of [h, w, d]:
// out[cell, :] = sum_taps w * x[src, :]. Used for the pitched token grid.
struct ResampleTap {
    std::int64_t src;
    double weight;
};
struct ResamplePlan {
    std::int64_t out_h = 0, out_w = 0;
    std::int64_t in_h = 0, in_w = 0;
    std::vector<std::array<ResampleTap, 4>> taps;  // out_h*out_w entries
};

template <class T>
Var<T> grid_resample(Var<T> x, const ResamplePlan& plan) {
    Tape<T>& t = *x.tape;
    const auto& xv = t.value(x.id);
    if (xv.ndim() != 3 || xv.shape[0] != plan.in_h || xv.shape[1] != plan.in_w)
        throw std::invalid_argument("grid_resample: input " + shape_str(xv.shape) +
                                    " does not match plan " + std::to_string(plan.in_h) + "x" +
                                    std::to_string(plan.in_w));
    const std::int64_t d = xv.shape[2];
    Tensor<T> out({plan.out_h, plan.out_w, d});
    for (std::size_t cell = 0; cell < plan.taps.size(); ++cell) {
        T* dst = out.data() + static_cast<std::int64_t>(cell) * d;
        for (const auto& tap : plan.taps[cell]) {
            if (tap.weight == 0.0) continue;
            kernels::axpy<T>(static_cast<std::size_t>(d), static_cast<T>(tap.weight),
                             xv.data() + tap.src * d, dst);
        }
    }
    const auto xi = x.id;
    const ResamplePlan* pp = &plan;  // plans are long-lived (cached by caller)
    return t.record(std::move(out), t.needs_grad(xi),
                    [xi, pp, d](Tape<T>& tp, std::int32_t self) {
                        if (!tp.needs_grad(xi)) return;
                        const Tensor<T>& g = tp.node(self).grad;
                        Tensor<T>& gx = tp.grad(xi);
                        for (std::size_t cell = 0; cell < pp->taps.size(); ++cell) {
                            const T* gs = g.data() + static_cast<std::int64_t>(cell) * d;
                            for (const auto& tap : pp->taps[cell]) {
                                if (tap.weight == 0.0) continue;
                                kernels::axpy<T>(static_cast<std::size_t>(d), static_cast<T>(tap.weight), gs,
                                                 gx.data() + tap.src * d);
                            }
                        }
                    });
}

// ---------------------------------------------------------------------------
// gradient checking: max over coordinates of
// |analytic - central difference| / max(1, |analytic|)

template <class T>
double grad_check(const std::function<Var<T>(Tape<T>&, Var<T>)>& f, const Tensor<T>& x, T eps) {
    Tape<T> tape;
    Var<T> xv = tape.leaf(x, true);
    Var<T> y = f(tape, xv);
    if (y.numel() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
    if (!std::isfinite(static_cast<double>(y.val().v[0])))
        throw std::runtime_error("grad_check: non-finite forward value");
    tape.backward(y);
    Tensor<T> analytic = tape.node(xv.id).grad;
    if (analytic.v.empty()) analytic = Tensor<T>::zeros(x.shape);

    double maxerr = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        Tensor<T> xp = x, xm = x;
        xp.v[static_cast<std::size_t>(i)] += eps;
        xm.v[static_cast<std::size_t>(i)] -= eps;
        Tape<T> tp, tm;
        const double fp = static_cast<double>(f(tp, tp.leaf(xp, false)).val().v[0]);
        const double fm = static_cast<double>(f(tm, tm.leaf(xm, false)).val().v[0]);
        const double num = (fp - fm) / (2.0 * static_cast<double>(eps));
        const double ana = static_cast<double>(analytic.v[static_cast<std::size_t>(i)]);
        const double err = std::abs(ana - num) / std::max(1.0, std::abs(ana));
        maxerr = std::max(maxerr, err);
    }
    return maxerr;
}

// same, over several inputs at once
template <class T>
double grad_check_multi(const std::function<Var<T>(Tape<T>&, std::vector<Var<T>>&)>& f,
                        const std::vector<Tensor<T>>& xs, T eps) {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(tape.leaf(x, true));
    Var<T> y = f(tape, vars);
    if (y.numel() != 1) throw std::invalid_argument("grad_check_multi: f must be scalar-valued");
    if (!std::isfinite(static_cast<double>(y.val().v[0])))
        throw std::runtime_error("grad_check_multi: non-finite forward value");
    tape.backward(y);
    std::vector<Tensor<T>> analytic;
    for (auto& v : vars) {
        Tensor<T> g = tape.node(v.id).grad;
        if (g.v.empty()) g = Tensor<T>::zeros(v.val().shape);
        analytic.push_back(std::move(g));
    }
    double maxerr = 0.0;
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
        for (std::int64_t i = 0; i < xs[xi].numel(); ++i) {
            auto eval = [&](T delta) {
                Tape<T> tp;
                std::vector<Var<T>> vs;
                for (std::size_t j = 0; j < xs.size(); ++j) {
                    Tensor<T> t2 = xs[j];
                    if (j == xi) t2.v[static_cast<std::size_t>(i)] += delta;
                    vs.push_back(tp.leaf(t2, false));
                }
                return static_cast<double>(f(tp, vs).val().v[0]);
            };
            const double num = (eval(eps) - eval(-eps)) / (2.0 * static_cast<double>(eps));
            const double ana = static_cast<double>(analytic[xi].v[static_cast<std::size_t>(i)]);
            const double err = std::abs(ana - num) / std::max(1.0, std::abs(ana));
            maxerr = std::max(maxerr, err);
        }
    }
    return maxerr;
}

}  // namespace pano
