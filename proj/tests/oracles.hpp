// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations, written as direct nested loops and
// kept independent of the library's im2col/matmul path.
#pragma once

#include <cmath>
#include <cstdint>

#include "tspred/tensor.hpp"

namespace oracle {

using tspred::Dims;
using tspred::TensorT;

// Same-padding arithmetic, derived independently from the halving rule.
struct Pads {
    std::int64_t top = 0, left = 0;
};

inline Pads same_pads(std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
                      std::int64_t s) {
    Pads p;
    const std::int64_t oh = h / s, ow = w / s;
    const std::int64_t th = std::max<std::int64_t>(0, (oh - 1) * s + kh - h);
    const std::int64_t tw = std::max<std::int64_t>(0, (ow - 1) * s + kw - w);
    p.top = th / 2;
    p.left = tw / 2;
    return p;
}

template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& k, const TensorT<T>& b, std::int64_t s,
                  std::int64_t pt, std::int64_t pl, std::int64_t oh, std::int64_t ow) {
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t F = k.dim(0), KH = k.dim(2), KW = k.dim(3);
    TensorT<T> y({N, F, oh, ow});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t f = 0; f < F; ++f)
            for (std::int64_t i = 0; i < oh; ++i)
                for (std::int64_t j = 0; j < ow; ++j) {
                    T acc = b.numel() ? b[f] : T(0);
                    for (std::int64_t c = 0; c < C; ++c)
                        for (std::int64_t u = 0; u < KH; ++u)
                            for (std::int64_t v = 0; v < KW; ++v) {
                                const std::int64_t hh = i * s - pt + u;
                                const std::int64_t ww = j * s - pl + v;
                                if (hh >= 0 && hh < H && ww >= 0 && ww < W)
                                    acc += x.at4(n, c, hh, ww) * k.at4(f, c, u, v);
                            }
                    y.at4(n, f, i, j) = acc;
                }
    return y;
}

// Direct scatter form of the transposed convolution: every input element
// spreads through the kernel into the output, the exact adjoint access
// pattern of conv2d above. Kernel layout [Cin, Cout, KH, KW].
template <class T>
TensorT<T> conv2d_transposed(const TensorT<T>& x, const TensorT<T>& k, const TensorT<T>& b,
                             std::int64_t s, std::int64_t pt, std::int64_t pl, std::int64_t oh,
                             std::int64_t ow) {
    const std::int64_t N = x.dim(0), F = k.dim(0), C = k.dim(1);
    const std::int64_t IH = x.dim(2), IW = x.dim(3);
    const std::int64_t KH = k.dim(2), KW = k.dim(3);
    TensorT<T> y({N, C, oh, ow});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t f = 0; f < F; ++f)
            for (std::int64_t i = 0; i < IH; ++i)
                for (std::int64_t j = 0; j < IW; ++j) {
                    const T v = x.at4(n, f, i, j);
                    for (std::int64_t c = 0; c < C; ++c)
                        for (std::int64_t u = 0; u < KH; ++u)
                            for (std::int64_t w = 0; w < KW; ++w) {
                                const std::int64_t hh = i * s - pt + u;
                                const std::int64_t ww = j * s - pl + w;
                                if (hh >= 0 && hh < oh && ww >= 0 && ww < ow)
                                    y.at4(n, c, hh, ww) += v * k.at4(f, c, u, w);
                            }
                }
    if (b.numel())
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t i = 0; i < oh; ++i)
                    for (std::int64_t j = 0; j < ow; ++j) y.at4(n, c, i, j) += b[c];
    return y;
}

template <class T>
double dot(const TensorT<T>& a, const TensorT<T>& b) {
    double acc = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

template <class T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    double m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

// Naive per-window SSIM, 7x7 uniform, valid sliding.
inline double ssim_naive(const float* a, const float* b, std::int64_t h, std::int64_t w,
                         double range) {
    const std::int64_t win = 7;
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    double total = 0;
    std::int64_t count = 0;
    for (std::int64_t y = 0; y + win <= h; ++y)
        for (std::int64_t x = 0; x + win <= w; ++x) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::int64_t dy = 0; dy < win; ++dy)
                for (std::int64_t dx = 0; dx < win; ++dx) {
                    const double va = a[(y + dy) * w + (x + dx)];
                    const double vb = b[(y + dy) * w + (x + dx)];
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            const double n = win * win;
            const double ma = sa / n, mb = sb / n;
            const double va = saa / n - ma * ma, vb = sbb / n - mb * mb;
            const double cov = sab / n - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

}  // namespace oracle
