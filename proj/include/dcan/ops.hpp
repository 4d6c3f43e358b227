#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dcan/rng.hpp"
#include "dcan/tensor.hpp"

namespace dcan {

namespace detail {

// Raw accumulating matrix products on contiguous row-major buffers.
// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void acc_nn(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (int64_t l = 0; l < k; ++l) {
            const T coeff = arow[l];
            if (coeff == T(0)) continue;
            const T* brow = b + l * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += coeff * brow[j];
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T
template <typename T>
void acc_nt(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = T(0);
            for (int64_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] += acc;
        }
    }
}

// C[m x n] += A[k x m]^T * B[k x n]
template <typename T>
void acc_tn(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n) {
    for (int64_t l = 0; l < k; ++l) {
        const T* arow = a + l * m;
        const T* brow = b + l * n;
        for (int64_t i = 0; i < m; ++i) {
            const T coeff = arow[i];
            if (coeff == T(0)) continue;
            T* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += coeff * brow[j];
        }
    }
}

template <typename T>
bool want_grad(Tensor<T> t) {
    return Tape<T>::current() != nullptr && t.requires_grad();
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<T> out(a.shape());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = av[i] + bv[i];

    auto* tape = Tape<T>::current();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            if (a.requires_grad()) a.ensure_grad();
            if (b.requires_grad()) b.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<T> out(a.shape());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = av[i] * bv[i];

    auto* tape = Tape<T>::current();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out]() mutable {
            if (a.requires_grad()) a.ensure_grad();
            if (b.requires_grad()) b.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto av2 = a.values();
            auto bv2 = b.values();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv2[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av2[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(Tensor<T> x, T c) {
    Tensor<T> out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = xv[i] * c;

    auto* tape = Tape<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out, c]() mutable {
            x.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto gx = x.grad();
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * c;
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(Tensor<T> x) {
    T acc = T(0);
    for (T v : x.values()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);

    auto* tape = Tape<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out]() mutable {
            x.ensure_grad();
            if (!out.has_grad()) return;
            const T g = out.grad()[0];
            auto gx = x.grad();
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

// Fixed-weight scalar projection sum(w .* x); w carries no gradient.
template <typename T>
Tensor<T> dot_const(Tensor<T> x, std::vector<T> w) {
    if (static_cast<int64_t>(w.size()) != x.numel())
        throw ShapeError("dot_const: weight count mismatch");
    T acc = T(0);
    auto xv = x.values();
    for (size_t i = 0; i < w.size(); ++i) acc += w[i] * xv[i];
    Tensor<T> out = Tensor<T>::scalar(acc);

    auto* tape = Tape<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out, w = std::move(w)]() mutable {
            x.ensure_grad();
            if (!out.has_grad()) return;
            const T g = out.grad()[0];
            auto gx = x.grad();
            for (size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(Tensor<T> x) {
    Tensor<T> out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);

    auto* tape = Tape<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out]() mutable {
            x.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto gx = x.grad();
            auto xv2 = x.values();
            for (size_t i = 0; i < go.size(); ++i)
                if (xv2[i] > T(0)) gx[i] += go[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> x) {
    Tensor<T> out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (int64_t i = 0; i < out.numel(); ++i) ov[i] = detail::stable_sigmoid(xv[i]);

    auto* tape = Tape<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out]() mutable {
            x.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto gx = x.grad();
            auto y = out.values();
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * y[i] * (T(1) - y[i]);
        });
    }
    return out;
}

// Softmax along `axis` with max-subtraction. For 2-D input with axis 0 an
// optional n_valid restricts the normalization to the first n_valid rows and
// zeroes the rest (masked attention over padded positions). n_valid < 0
// means the full extent.
template <typename T>
Tensor<T> softmax(Tensor<T> x, int axis, int64_t n_valid = -1) {
    if (x.rank() != 1 && x.rank() != 2)
        throw std::invalid_argument("softmax: rank-1 or rank-2 input required");
    if (axis < 0 || axis >= static_cast<int>(x.rank()))
        throw std::invalid_argument("softmax: axis out of range");

    int64_t lanes, lane_len, lane_stride, elem_stride;
    if (x.rank() == 1) {
        lanes = 1;
        lane_len = x.dim(0);
        lane_stride = 0;
        elem_stride = 1;
    } else if (axis == 0) {
        lanes = x.dim(1);
        lane_len = x.dim(0);
        lane_stride = 1;
        elem_stride = x.dim(1);
    } else {
        lanes = x.dim(0);
        lane_len = x.dim(1);
        lane_stride = x.dim(1);
        elem_stride = 1;
    }
    int64_t valid = n_valid < 0 ? lane_len : n_valid;
    if (n_valid >= 0 && (x.rank() != 2 || axis != 0) && n_valid != lane_len)
        throw std::invalid_argument("softmax: n_valid only supported along axis 0 of 2-D input");
    if (valid < 1 || valid > lane_len)
        throw std::invalid_argument("softmax: empty or oversized axis extent");

    Tensor<T> out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (int64_t lane = 0; lane < lanes; ++lane) {
        const int64_t base = lane * lane_stride;
        T mx = xv[base];
        for (int64_t i = 1; i < valid; ++i) mx = std::max(mx, xv[base + i * elem_stride]);
        T z = T(0);
        for (int64_t i = 0; i < valid; ++i) {
            const T e = std::exp(xv[base + i * elem_stride] - mx);
            ov[base + i * elem_stride] = e;
            z += e;
        }
        for (int64_t i = 0; i < valid; ++i) ov[base + i * elem_stride] /= z;
        for (int64_t i = valid; i < lane_len; ++i) ov[base + i * elem_stride] = T(0);
    }

    auto* tape = Tape<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out, lanes, lane_stride, elem_stride, valid]() mutable {
            x.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto gx = x.grad();
            auto y = out.values();
            for (int64_t lane = 0; lane < lanes; ++lane) {
                const int64_t base = lane * lane_stride;
                T s = T(0);
                for (int64_t i = 0; i < valid; ++i) {
                    const int64_t idx = base + i * elem_stride;
                    s += go[idx] * y[idx];
                }
                for (int64_t i = 0; i < valid; ++i) {
                    const int64_t idx = base + i * elem_stride;
                    gx[idx] += y[idx] * (go[idx] - s);
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: rank-2 operands required");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
    const int64_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
    Tensor<T> out({p, r});
    detail::acc_nn(out.values().data(), a.values().data(), b.values().data(), p, q, r);

    auto* tape = Tape<T>::current();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out, p, q, r]() mutable {
            if (a.requires_grad()) a.ensure_grad();
            if (b.requires_grad()) b.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            if (a.requires_grad())
                detail::acc_nt(a.grad().data(), go.data(), b.values().data(), p, r, q);
            if (b.requires_grad())
                detail::acc_tn(b.grad().data(), a.values().data(), go.data(), q, p, r);
        });
    }
    return out;
}

// out = a * b^T, a: [p x q], b: [r x q] -> [p x r]
template <typename T>
Tensor<T> matmul_nt(Tensor<T> a, Tensor<T> b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul_nt: rank-2 operands required");
    if (a.dim(1) != b.dim(1))
        throw ShapeError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) +
                         " * " + shape_str(b.shape()) + "^T");
    const int64_t p = a.dim(0), q = a.dim(1), r = b.dim(0);
    Tensor<T> out({p, r});
    detail::acc_nt(out.values().data(), a.values().data(), b.values().data(), p, q, r);

    auto* tape = Tape<T>::current();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out, p, q, r]() mutable {
            if (a.requires_grad()) a.ensure_grad();
            if (b.requires_grad()) b.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            if (a.requires_grad())
                detail::acc_nn(a.grad().data(), go.data(), b.values().data(), p, r, q);
            if (b.requires_grad())
                detail::acc_tn(b.grad().data(), go.data(), a.values().data(), r, p, q);
        });
    }
    return out;
}

// out = a^T * b, a: [q x p], b: [q x r] -> [p x r]
template <typename T>
Tensor<T> matmul_tn(Tensor<T> a, Tensor<T> b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul_tn: rank-2 operands required");
    if (a.dim(0) != b.dim(0))
        throw ShapeError("matmul_tn: inner dimensions disagree " + shape_str(a.shape()) +
                         "^T * " + shape_str(b.shape()));
    const int64_t q = a.dim(0), p = a.dim(1), r = b.dim(1);
    Tensor<T> out({p, r});
    detail::acc_tn(out.values().data(), a.values().data(), b.values().data(), p, q, r);

    auto* tape = Tape<T>::current();
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, b, out, p, q, r]() mutable {
            if (a.requires_grad()) a.ensure_grad();
            if (b.requires_grad()) b.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            if (a.requires_grad())
                detail::acc_nt(a.grad().data(), b.values().data(), go.data(), q, r, p);
            if (b.requires_grad())
                detail::acc_nn(b.grad().data(), a.values().data(), go.data(), q, p, r);
        });
    }
    return out;
}

// Causal dilated 1-D convolution. x: [n x c_in], filters: [c_out x c_in x k].
// The input is implicitly left-padded with (k-1)*dilation zero rows, so
// out[s] = sum_i sum_c f[o][c][i] * x[s - dilation*i][c] with x[t<0] = 0 and
// the output keeps length n. out[s] depends only on x[t] for t <= s.
template <typename T>
Tensor<T> conv1d_dilated(Tensor<T> x, Tensor<T> filters, int64_t dilation) {
    if (dilation < 1) throw std::invalid_argument("conv1d_dilated: dilation must be >= 1");
    if (x.rank() != 2) throw ShapeError("conv1d_dilated: input must be [n x c_in]");
    if (filters.rank() != 3)
        throw ShapeError("conv1d_dilated: filters must be [c_out x c_in x k]");
    const int64_t n = x.dim(0), c_in = x.dim(1);
    const int64_t c_out = filters.dim(0), k = filters.dim(2);
    if (k < 1) throw std::invalid_argument("conv1d_dilated: kernel size must be >= 1");
    if (filters.dim(1) != c_in)
        throw ShapeError("conv1d_dilated: channel mismatch, input has " + std::to_string(c_in) +
                         ", filters expect " + std::to_string(filters.dim(1)));

    Tensor<T> out({n, c_out});
    // Tap- and input-channel-major repack, wt[i][c][o] = filters[o][c][i],
    // so the inner update is an axpy over the contiguous output row and
    // vectorizes without reassociating a reduction.
    std::vector<T> wt(static_cast<size_t>(k * c_in * c_out));
    {
        auto fv = filters.values();
        for (int64_t o = 0; o < c_out; ++o)
            for (int64_t c = 0; c < c_in; ++c)
                for (int64_t i = 0; i < k; ++i)
                    wt[static_cast<size_t>((i * c_in + c) * c_out + o)] =
                        fv[static_cast<size_t>((o * c_in + c) * k + i)];
    }
    {
        auto xv = x.values();
        auto ov = out.values();
        for (int64_t i = 0; i < k; ++i) {
            const T* wtap = wt.data() + i * c_in * c_out;
            for (int64_t s = dilation * i; s < n; ++s) {
                const T* xrow = xv.data() + (s - dilation * i) * c_in;
                T* orow = ov.data() + s * c_out;
                for (int64_t c = 0; c < c_in; ++c) {
                    const T coeff = xrow[c];
                    if (coeff == T(0)) continue;
                    const T* wrow = wtap + c * c_out;
                    for (int64_t o = 0; o < c_out; ++o) orow[o] += coeff * wrow[o];
                }
            }
        }
    }

    auto* tape = Tape<T>::current();
    if (tape && (x.requires_grad() || filters.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([x, filters, out, dilation, n, c_in, c_out, k]() mutable {
            if (x.requires_grad()) x.ensure_grad();
            if (filters.requires_grad()) filters.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto xv = x.values();
            auto fv = filters.values();
            if (x.requires_grad()) {
                // gx[t][c] += go[s][o] * f[o][c][i] for t = s - d*i, repacked
                // output-channel-major (wt[i][o][c]) so the inner axpy runs
                // over the contiguous gx row.
                std::vector<T> wt(static_cast<size_t>(k * c_out * c_in));
                for (int64_t o = 0; o < c_out; ++o)
                    for (int64_t c = 0; c < c_in; ++c)
                        for (int64_t i = 0; i < k; ++i)
                            wt[static_cast<size_t>((i * c_out + o) * c_in + c)] =
                                fv[static_cast<size_t>((o * c_in + c) * k + i)];
                auto gx = x.grad();
                for (int64_t i = 0; i < k; ++i) {
                    const T* wtap = wt.data() + i * c_out * c_in;
                    for (int64_t s = dilation * i; s < n; ++s) {
                        const T* grow = go.data() + s * c_out;
                        T* gxrow = gx.data() + (s - dilation * i) * c_in;
                        for (int64_t o = 0; o < c_out; ++o) {
                            const T coeff = grow[o];
                            if (coeff == T(0)) continue;
                            const T* wrow = wtap + o * c_in;
                            for (int64_t c = 0; c < c_in; ++c) gxrow[c] += coeff * wrow[c];
                        }
                    }
                }
            }
            if (filters.requires_grad()) {
                // gw[o][c][i] += go[s][o] * x[s - d*i][c], accumulated in
                // tap-major scratch then scattered back.
                std::vector<T> gwt(static_cast<size_t>(k * c_out * c_in), T(0));
                for (int64_t i = 0; i < k; ++i) {
                    T* gtap = gwt.data() + i * c_out * c_in;
                    for (int64_t s = dilation * i; s < n; ++s) {
                        const T* grow = go.data() + s * c_out;
                        const T* xrow = xv.data() + (s - dilation * i) * c_in;
                        for (int64_t o = 0; o < c_out; ++o) {
                            const T coeff = grow[o];
                            if (coeff == T(0)) continue;
                            T* gdst = gtap + o * c_in;
                            for (int64_t c = 0; c < c_in; ++c) gdst[c] += coeff * xrow[c];
                        }
                    }
                }
                auto gf = filters.grad();
                for (int64_t o = 0; o < c_out; ++o)
                    for (int64_t c = 0; c < c_in; ++c)
                        for (int64_t i = 0; i < k; ++i)
                            gf[static_cast<size_t>((o * c_in + c) * k + i)] +=
                                gwt[static_cast<size_t>((i * c_out + o) * c_in + c)];
            }
        });
    }
    return out;
}

// Weight normalization: w = g * v / ||v||_2 per output channel. For rank >= 2
// the channel axis is axis 0 (one gain per leading slab); a rank-1 v is a
// single channel. The result has L2 norm |g| per channel.
template <typename T>
Tensor<T> weight_norm(Tensor<T> v, Tensor<T> g) {
    const int64_t channels = v.rank() >= 2 ? v.dim(0) : 1;
    if (g.numel() != channels)
        throw ShapeError("weight_norm: gain count " + std::to_string(g.numel()) +
                         " does not match channel count " + std::to_string(channels));
    const int64_t slab = v.numel() / channels;

    std::vector<T> norms(static_cast<size_t>(channels));
    auto vv = v.values();
    for (int64_t o = 0; o < channels; ++o) {
        T acc = T(0);
        const T* row = vv.data() + o * slab;
        for (int64_t i = 0; i < slab; ++i) acc += row[i] * row[i];
        const T norm = std::sqrt(acc);
        if (norm == T(0))
            throw DegenerateInputError("weight_norm: zero-norm direction in channel " +
                                       std::to_string(o));
        norms[static_cast<size_t>(o)] = norm;
    }

    Tensor<T> out(v.shape());
    auto gv = g.values();
    auto ov = out.values();
    for (int64_t o = 0; o < channels; ++o) {
        const T s = gv[o] / norms[static_cast<size_t>(o)];
        const T* src = vv.data() + o * slab;
        T* dst = ov.data() + o * slab;
        for (int64_t i = 0; i < slab; ++i) dst[i] = s * src[i];
    }

    auto* tape = Tape<T>::current();
    if (tape && (v.requires_grad() || g.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([v, g, out, channels, slab, norms = std::move(norms)]() mutable {
            if (v.requires_grad()) v.ensure_grad();
            if (g.requires_grad()) g.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto vv2 = v.values();
            auto gv2 = g.values();
            for (int64_t o = 0; o < channels; ++o) {
                const T norm = norms[static_cast<size_t>(o)];
                const T* vrow = vv2.data() + o * slab;
                const T* grow = go.data() + o * slab;
                T dot_gv = T(0);
                for (int64_t i = 0; i < slab; ++i) dot_gv += grow[i] * vrow[i];
                if (g.requires_grad()) g.grad()[o] += dot_gv / norm;
                if (v.requires_grad()) {
                    auto gvd = v.grad();
                    T* vdst = gvd.data() + o * slab;
                    const T a = gv2[o] / norm;
                    const T b = gv2[o] * dot_gv / (norm * norm * norm);
                    for (int64_t i = 0; i < slab; ++i) vdst[i] += a * grow[i] - b * vrow[i];
                }
            }
        });
    }
    return out;
}

// Inverted dropout: zero each element with probability rate during training
// and scale survivors by 1/(1-rate); identity in inference.
template <typename T>
Tensor<T> dropout(Tensor<T> x, double rate, bool training, RngStream& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    if (!training || rate == 0.0) return x;

    std::vector<uint8_t> keep(static_cast<size_t>(x.numel()));
    for (auto& m : keep) m = rng.uniform() >= rate ? 1 : 0;
    const T inv = T(1.0 / (1.0 - rate));

    Tensor<T> out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (int64_t i = 0; i < x.numel(); ++i) ov[i] = keep[static_cast<size_t>(i)] ? xv[i] * inv : T(0);

    auto* tape = Tape<T>::current();
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([x, out, keep = std::move(keep), inv]() mutable {
            x.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto gx = x.grad();
            for (size_t i = 0; i < go.size(); ++i)
                if (keep[i]) gx[i] += go[i] * inv;
        });
    }
    return out;
}

// Row gather: out[t] = table[ids[t]]. Gradients never flow into the pad row,
// which stays frozen at zero.
template <typename T>
Tensor<T> embedding_lookup(const std::vector<int32_t>& ids, Tensor<T> table,
                           int32_t pad_id = 0) {
    if (table.rank() != 2) throw ShapeError("embedding_lookup: table must be [vocab x dim]");
    if (ids.empty()) throw std::invalid_argument("embedding_lookup: empty id sequence");
    const int64_t vocab = table.dim(0), d = table.dim(1);
    for (int32_t id : ids)
        if (id < 0 || id >= vocab)
            throw IndexError("embedding_lookup: id " + std::to_string(id) +
                             " outside vocabulary of size " + std::to_string(vocab));

    const int64_t n = static_cast<int64_t>(ids.size());
    Tensor<T> out({n, d});
    auto tv = table.values();
    auto ov = out.values();
    for (int64_t t = 0; t < n; ++t) {
        const T* src = tv.data() + static_cast<int64_t>(ids[static_cast<size_t>(t)]) * d;
        std::copy(src, src + d, ov.data() + t * d);
    }

    auto* tape = Tape<T>::current();
    if (tape && table.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([table, out, ids, pad_id, d]() mutable {
            table.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto gt = table.grad();
            for (size_t t = 0; t < ids.size(); ++t) {
                if (ids[t] == pad_id) continue;
                T* dst = gt.data() + static_cast<int64_t>(ids[t]) * d;
                const T* src = go.data() + static_cast<int64_t>(t) * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

// out[i][j] = a[i][j] + bias[j]; bias may be [p] or [1 x p].
template <typename T>
Tensor<T> add_rowwise(Tensor<T> a, Tensor<T> bias) {
    if (a.rank() != 2) throw ShapeError("add_rowwise: rank-2 input required");
    const int64_t m = a.dim(0), p = a.dim(1);
    if (bias.numel() != p)
        throw ShapeError("add_rowwise: bias length " + std::to_string(bias.numel()) +
                         " does not match row width " + std::to_string(p));
    Tensor<T> out(a.shape());
    auto av = a.values();
    auto bv = bias.values();
    auto ov = out.values();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < p; ++j) ov[i * p + j] = av[i * p + j] + bv[j];

    auto* tape = Tape<T>::current();
    if (tape && (a.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([a, bias, out, m, p]() mutable {
            if (a.requires_grad()) a.ensure_grad();
            if (bias.requires_grad()) bias.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (bias.requires_grad()) {
                auto gb = bias.grad();
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < p; ++j) gb[j] += go[i * p + j];
            }
        });
    }
    return out;
}

// Max over each row of a [m x p] matrix -> [m]. Ties resolve to the lowest
// column index so the backward routing is deterministic.
template <typename T>
Tensor<T> rowwise_max(Tensor<T> a) {
    if (a.rank() != 2) throw ShapeError("rowwise_max: rank-2 input required");
    const int64_t m = a.dim(0), p = a.dim(1);
    Tensor<T> out({m});
    std::vector<int64_t> arg(static_cast<size_t>(m));
    auto av = a.values();
    auto ov = out.values();
    for (int64_t i = 0; i < m; ++i) {
        const T* row = av.data() + i * p;
        int64_t best = 0;
        for (int64_t j = 1; j < p; ++j)
            if (row[j] > row[best]) best = j;
        arg[static_cast<size_t>(i)] = best;
        ov[i] = row[best];
    }

    auto* tape = Tape<T>::current();
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([a, out, arg = std::move(arg), p]() mutable {
            a.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto ga = a.grad();
            for (size_t i = 0; i < arg.size(); ++i)
                ga[static_cast<int64_t>(i) * p + arg[i]] += go[i];
        });
    }
    return out;
}

// Mean over each row of a [m x p] matrix -> [m].
template <typename T>
Tensor<T> rowwise_mean(Tensor<T> a) {
    if (a.rank() != 2) throw ShapeError("rowwise_mean: rank-2 input required");
    const int64_t m = a.dim(0), p = a.dim(1);
    Tensor<T> out({m});
    auto av = a.values();
    auto ov = out.values();
    for (int64_t i = 0; i < m; ++i) {
        T acc = T(0);
        for (int64_t j = 0; j < p; ++j) acc += av[i * p + j];
        ov[i] = acc / T(p);
    }

    auto* tape = Tape<T>::current();
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([a, out, m, p]() mutable {
            a.ensure_grad();
            if (!out.has_grad()) return;
            auto go = out.grad();
            auto ga = a.grad();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < p; ++j) ga[i * p + j] += go[i] / T(p);
        });
    }
    return out;
}

// Binary cross entropy evaluated from logits (never from probabilities) so
// saturated predictions cannot produce log(0):
//   L = sum_i [ max(z_i, 0) - z_i * y_i + log(1 + exp(-|z_i|)) ].
// Targets are constants (no gradient), may be smoothed values in [0, 1].
template <typename T>
Tensor<T> bce_with_logits(Tensor<T> logits, std::vector<T> targets) {
    if (static_cast<int64_t>(targets.size()) != logits.numel())
        throw ShapeError("bce_with_logits: target count mismatch");
    T acc = T(0);
    auto zv = logits.values();
    for (size_t i = 0; i < targets.size(); ++i) {
        const T z = zv[i];
        acc += std::max(z, T(0)) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor<T> out = Tensor<T>::scalar(acc);

    auto* tape = Tape<T>::current();
    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([logits, out, targets = std::move(targets)]() mutable {
            logits.ensure_grad();
            if (!out.has_grad()) return;
            const T g = out.grad()[0];
            auto gz = logits.grad();
            auto zv2 = logits.values();
            for (size_t i = 0; i < targets.size(); ++i)
                gz[i] += g * (detail::stable_sigmoid(zv2[i]) - targets[i]);
        });
    }
    return out;
}

}  // namespace dcan
