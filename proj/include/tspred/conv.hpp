// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "tspred/parallel.hpp"
#include "tspred/tensor.hpp"

#ifdef TSPRED_CONV_STATS
#include <chrono>
#include <cstdio>
#include <map>
#include <mutex>
#include <string>
#endif

namespace tspred {

// Opt-in per-shape timing, for finding the slow layers.
#ifdef TSPRED_CONV_STATS
struct ConvStats {
    struct Entry { double ms = 0; double macs = 0; std::int64_t calls = 0; };
    std::map<std::string, Entry> entries;
    std::mutex mu;
    static ConvStats& get() { static ConvStats s; return s; }
    void record(const std::string& key, double ms, double macs) {
        std::lock_guard<std::mutex> l(mu);
        auto& e = entries[key];
        e.ms += ms; e.macs += macs; e.calls++;
    }
    void dump() {
        for (auto& [k, e] : entries)
            std::printf("%-40s %8.1f ms %7.2f GMAC %6.2f GMAC/s  x%lld\n", k.c_str(), e.ms,
                        e.macs * 1e-9, e.macs / (e.ms * 1e6), (long long)e.calls);
    }
};
struct ConvTimer {
    std::string key;
    double macs;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    ~ConvTimer() {
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        ConvStats::get().record(key, ms, macs);
    }
};
#define TSPRED_CONV_TIMER(tag, n, f, ckk, p) \
    ConvTimer _ct{std::string(tag), double(n) * double(f) * double(ckk) * double(p)}
#else
#define TSPRED_CONV_TIMER(tag, n, f, ckk, p)
#endif

enum class PadMode { Same, Valid };

// Layer geometry for conv2d / conv2d_transposed. `filters` mirrors the
// kernel's output-channel extent and is cross-checked against it.
struct ConvSpec {
    int kh = 3;
    int kw = 3;
    int stride = 1;
    int filters = 0;
    PadMode padding = PadMode::Same;
};

struct ConvGeom {
    std::int64_t oh = 0, ow = 0;  // output spatial extents
    std::int64_t pt = 0, pl = 0;  // top/left zero padding
};

// Same-padding rule: output = input/stride, with the shortfall split
// floor-half on top/left and the remainder on bottom/right. A stride-2 4x4
// kernel pads (1,1); a stride-1 4x4 kernel pads (1,2).
inline ConvGeom conv_geometry(std::int64_t h, std::int64_t w, const ConvSpec& s) {
    ConvGeom g;
    if (s.padding == PadMode::Same) {
        if (h % s.stride != 0 || w % s.stride != 0)
            throw ShapeError("same-padded conv needs spatial dims divisible by stride, got " +
                             std::to_string(h) + "x" + std::to_string(w) + " stride " +
                             std::to_string(s.stride));
        g.oh = h / s.stride;
        g.ow = w / s.stride;
        const std::int64_t th = std::max<std::int64_t>(0, (g.oh - 1) * s.stride + s.kh - h);
        const std::int64_t tw = std::max<std::int64_t>(0, (g.ow - 1) * s.stride + s.kw - w);
        g.pt = th / 2;
        g.pl = tw / 2;
    } else {
        if (h < s.kh || w < s.kw)
            throw ShapeError("valid conv kernel exceeds input: " + std::to_string(h) + "x" +
                             std::to_string(w) + " vs " + std::to_string(s.kh) + "x" +
                             std::to_string(s.kw));
        g.oh = (h - s.kh) / s.stride + 1;
        g.ow = (w - s.kw) / s.stride + 1;
        g.pt = g.pl = 0;
    }
    return g;
}

// Transposed output extents: stride * input for Same, (input-1)*stride + k
// for Valid. Same-mode geometry is exactly the adjoint of conv_geometry.
inline Dims transposed_out_dims(const Dims& x, const ConvSpec& s, std::int64_t cout) {
    if (s.padding == PadMode::Same)
        return {x[0], cout, x[2] * s.stride, x[3] * s.stride};
    return {x[0], cout, (x[2] - 1) * s.stride + s.kh, (x[3] - 1) * s.stride + s.kw};
}

namespace detail {

// col layout: [C*kh*kw, OH*OW] with the row index ordered channel-major,
// then kernel rows, then kernel columns. That ordering is the fixed
// per-output reduction order of the convolution.
template <class T>
TSPRED_NOINLINE void im2col(const T* img, std::int64_t C, std::int64_t H, std::int64_t W, const ConvSpec& s,
            const ConvGeom& g, T* col) {
    const std::int64_t P = g.oh * g.ow;
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t kh = 0; kh < s.kh; ++kh) {
            for (std::int64_t kw = 0; kw < s.kw; ++kw) {
                T* dst = col + ((c * s.kh + kh) * s.kw + kw) * P;
                const T* src = img + c * H * W;
                for (std::int64_t oh = 0; oh < g.oh; ++oh) {
                    const std::int64_t ih = oh * s.stride - g.pt + kh;
                    if (ih < 0 || ih >= H) {
                        for (std::int64_t ow = 0; ow < g.ow; ++ow) dst[oh * g.ow + ow] = T(0);
                        continue;
                    }
                    for (std::int64_t ow = 0; ow < g.ow; ++ow) {
                        const std::int64_t iw = ow * s.stride - g.pl + kw;
                        dst[oh * g.ow + ow] = (iw < 0 || iw >= W) ? T(0) : src[ih * W + iw];
                    }
                }
            }
        }
    }
}

// Scatter-add of a col buffer back into an image. Inverse access pattern of
// im2col; iteration order is fixed.
template <class T>
TSPRED_NOINLINE void col2im_add(const T* col, std::int64_t C, std::int64_t H, std::int64_t W, const ConvSpec& s,
                const ConvGeom& g, T* img) {
    const std::int64_t P = g.oh * g.ow;
    for (std::int64_t c = 0; c < C; ++c) {
        for (std::int64_t kh = 0; kh < s.kh; ++kh) {
            for (std::int64_t kw = 0; kw < s.kw; ++kw) {
                const T* src = col + ((c * s.kh + kh) * s.kw + kw) * P;
                T* dst = img + c * H * W;
                for (std::int64_t oh = 0; oh < g.oh; ++oh) {
                    const std::int64_t ih = oh * s.stride - g.pt + kh;
                    if (ih < 0 || ih >= H) continue;
                    for (std::int64_t ow = 0; ow < g.ow; ++ow) {
                        const std::int64_t iw = ow * s.stride - g.pl + kw;
                        if (iw >= 0 && iw < W) dst[ih * W + iw] += src[oh * g.ow + ow];
                    }
                }
            }
        }
    }
}

// Register-tiled micro-kernel: a fixed MRxNR block of C accumulates in
// registers across the whole k loop, so B streams once per row block and C
// is touched once. Each C element still sums over k in ascending order, so
// the result is bitwise identical to the naive triple loop.
inline constexpr std::int64_t kMmRows = 4;
template <class T>
inline constexpr std::int64_t kMmCols = 256 / static_cast<std::int64_t>(sizeof(T));

// astride: distance between consecutive-k elements of one logical A row.
// mm_nn uses (arow + k), mm_tn uses (acol + k*M); both reduce to a strided
// walk, so one kernel serves both layouts.
template <class T, int MR>
TSPRED_NOINLINE void mm_block(const T* a0, std::int64_t astride_row, std::int64_t astride_k,
                              const T* B, T* C, std::int64_t N, std::int64_t K, std::int64_t j0,
                              std::int64_t nr, bool accumulate) {
    constexpr std::int64_t NR = kMmCols<T>;
    T acc[MR][NR];
    if (nr == NR) {
        for (int r = 0; r < MR; ++r)
            for (std::int64_t j = 0; j < NR; ++j)
                acc[r][j] = accumulate ? C[r * N + j0 + j] : T(0);
        for (std::int64_t k = 0; k < K; ++k) {
            const T* brow = B + k * N + j0;
            for (int r = 0; r < MR; ++r) {
                const T a = a0[r * astride_row + k * astride_k];
                for (std::int64_t j = 0; j < NR; ++j) acc[r][j] += a * brow[j];
            }
        }
        for (int r = 0; r < MR; ++r)
            for (std::int64_t j = 0; j < NR; ++j) C[r * N + j0 + j] = acc[r][j];
    } else {
        for (int r = 0; r < MR; ++r)
            for (std::int64_t j = 0; j < nr; ++j)
                acc[r][j] = accumulate ? C[r * N + j0 + j] : T(0);
        for (std::int64_t k = 0; k < K; ++k) {
            const T* brow = B + k * N + j0;
            for (int r = 0; r < MR; ++r) {
                const T a = a0[r * astride_row + k * astride_k];
                for (std::int64_t j = 0; j < nr; ++j) acc[r][j] += a * brow[j];
            }
        }
        for (int r = 0; r < MR; ++r)
            for (std::int64_t j = 0; j < nr; ++j) C[r * N + j0 + j] = acc[r][j];
    }
}

template <class T>
void mm_strided(const T* A, std::int64_t astride_row, std::int64_t astride_k, const T* B, T* C,
                std::int64_t K, std::int64_t N, bool accumulate, std::int64_t row_begin,
                std::int64_t row_end) {
    constexpr std::int64_t NR = kMmCols<T>;
    std::int64_t i = row_begin;
    for (; i + kMmRows <= row_end; i += kMmRows) {
        const T* arow = A + i * astride_row;
        T* crow = C + i * N;
        for (std::int64_t j0 = 0; j0 < N; j0 += NR)
            mm_block<T, 4>(arow, astride_row, astride_k, B, crow, N, K, j0,
                           std::min(NR, N - j0), accumulate);
    }
    for (; i < row_end; ++i) {
        const T* arow = A + i * astride_row;
        T* crow = C + i * N;
        for (std::int64_t j0 = 0; j0 < N; j0 += NR)
            mm_block<T, 1>(arow, astride_row, astride_k, B, crow, N, K, j0,
                           std::min(NR, N - j0), accumulate);
    }
}

// C[M,N] (+)= A[M,K] * B[K,N].
template <class T>
void mm_nn(const T* A, const T* B, T* C, std::int64_t M, std::int64_t K, std::int64_t N,
           bool accumulate, std::int64_t row_begin = 0, std::int64_t row_end = -1) {
    if (row_end < 0) row_end = M;
    mm_strided(A, K, std::int64_t(1), B, C, K, N, accumulate, row_begin, row_end);
}

// C[M,N] (+)= A^T * B with A stored [K,M], B stored [K,N].
template <class T>
void mm_tn(const T* A, const T* B, T* C, std::int64_t M, std::int64_t K, std::int64_t N,
           bool accumulate, std::int64_t row_begin = 0, std::int64_t row_end = -1) {
    if (row_end < 0) row_end = M;
    mm_strided(A, std::int64_t(1), M, B, C, K, N, accumulate, row_begin, row_end);
}

template <class T>
TSPRED_NOINLINE void transpose(const T* src, std::int64_t rows, std::int64_t cols, T* dst) {
    constexpr std::int64_t B = 32;
    for (std::int64_t i0 = 0; i0 < rows; i0 += B)
        for (std::int64_t j0 = 0; j0 < cols; j0 += B)
            for (std::int64_t i = i0; i < std::min(rows, i0 + B); ++i)
                for (std::int64_t j = j0; j < std::min(cols, j0 + B); ++j)
                    dst[j * rows + i] = src[i * cols + j];
}

template <class T>
struct ColBuffers {
    std::vector<T> col;
    std::vector<T> aux;
    std::vector<T> aux2;
    T* get_col(std::int64_t n) {
        col.resize(static_cast<std::size_t>(n));
        return col.data();
    }
    T* get_aux(std::int64_t n) {
        aux.resize(static_cast<std::size_t>(n));
        return aux.data();
    }
    T* get_aux2(std::int64_t n) {
        aux2.resize(static_cast<std::size_t>(n));
        return aux2.data();
    }
};

// Narrow feature maps (P below the SIMD-friendly width) run the product in
// transposed layout so the vectorized axis is the channel count. Each output
// element still accumulates over k in ascending order, so results are
// bitwise identical to the direct form.
inline bool narrow_product(std::int64_t P, std::int64_t wide) { return P < 48 && wide > P; }

// out[F,P] (+)= K[F,CKK] * col[CKK,P]. kt is K pre-transposed to [CKK,F]
// when the narrow path was selected (null otherwise).
template <class T>
void kernel_times_col(const T* K, const T* kt, const T* col, T* out, std::int64_t F,
                      std::int64_t CKK, std::int64_t P, bool accumulate, ColBuffers<T>& buf) {
    if (!kt) {
        mm_nn(K, col, out, F, CKK, P, accumulate);
        return;
    }
    T* colT = buf.get_aux(CKK * P);
    transpose(col, CKK, P, colT);
    T* outT = buf.get_aux2(P * F);
    mm_nn(colT, kt, outT, P, CKK, F, false);
    if (accumulate) {
        for (std::int64_t f = 0; f < F; ++f)
            for (std::int64_t p = 0; p < P; ++p) out[f * P + p] += outT[p * F + f];
    } else {
        transpose(outT, P, F, out);
    }
}

// colbuf[CKK,P] = K^T * x with K stored [F,CKK], x stored [F,P].
template <class T>
void kernelT_times_x(const T* K, const T* x, T* colbuf, std::int64_t F, std::int64_t CKK,
                     std::int64_t P, ColBuffers<T>& buf) {
    if (!narrow_product(P, CKK)) {
        mm_tn(K, x, colbuf, CKK, F, P, false);
        return;
    }
    T* xT = buf.get_aux(P * F);
    transpose(x, F, P, xT);
    T* colT = buf.get_aux2(P * CKK);
    mm_nn(xT, K, colT, P, F, CKK, false);
    transpose(colT, P, CKK, colbuf);
}

}  // namespace detail

template <class T>
void conv_check_inputs(const TensorT<T>& x, const TensorT<T>& k, const TensorT<T>& b,
                       const ConvSpec& spec, bool transposed) {
    if (x.rank() != 4 || k.rank() != 4)
        throw ShapeError("conv expects rank-4 input and kernel");
    if (x.numel() == 0) throw std::domain_error("conv on zero-size input");
    const std::int64_t cin = transposed ? k.dim(0) : k.dim(1);
    const std::int64_t cout = transposed ? k.dim(1) : k.dim(0);
    if (x.dim(1) != cin)
        throw ShapeError("conv input channels " + std::to_string(x.dim(1)) +
                         " do not match kernel " + std::to_string(cin));
    if (k.dim(2) != spec.kh || k.dim(3) != spec.kw)
        throw ShapeError("kernel extents " + dims_str(k.dims()) + " disagree with spec " +
                         std::to_string(spec.kh) + "x" + std::to_string(spec.kw));
    if (spec.filters != 0 && spec.filters != cout)
        throw ShapeError("spec filters " + std::to_string(spec.filters) +
                         " disagree with kernel output channels " + std::to_string(cout));
    if (b.numel() != 0 && b.numel() != cout)
        throw ShapeError("bias length " + std::to_string(b.numel()) + " vs filters " +
                         std::to_string(cout));
    if (spec.stride < 1) throw ShapeError("stride must be positive");
}

template <class T>
void add_bias_rows(TensorT<T>& y, const TensorT<T>& b, std::int64_t N, std::int64_t F,
                   std::int64_t P) {
    if (!b.numel()) return;
    T* yd = y.data();
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t f = 0; f < F; ++f) {
            const T bv = b[f];
            T* plane = yd + (n * F + f) * P;
            for (std::int64_t p = 0; p < P; ++p) plane[p] += bv;
        }
}

// y[n,f,oh,ow] = b[f] + sum_{c,kh,kw} x[n,c,oh*s-pt+kh,ow*s-pl+kw] * k[f,c,kh,kw]
template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& k, const TensorT<T>& b,
                          const ConvSpec& spec) {
    conv_check_inputs(x, k, b, spec, false);
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t F = k.dim(0);
    const ConvGeom g = conv_geometry(H, W, spec);
    const std::int64_t CKK = C * spec.kh * spec.kw, P = g.oh * g.ow;
    TensorT<T> y({N, F, g.oh, g.ow});
    TSPRED_CONV_TIMER("convF " + dims_str(k.dims()) + " P" + std::to_string(P), N, F, CKK, P);
    const bool pointwise = spec.kh == 1 && spec.kw == 1 && spec.stride == 1;
    if (pointwise) {
        // 1x1 stride-1 convolution is a plain channel-mixing product.
        parallel_ranges(0, N, [&](std::int64_t n0, std::int64_t n1) {
            for (std::int64_t n = n0; n < n1; ++n)
                detail::mm_nn(k.data(), x.data() + n * C * P, y.data() + n * F * P, F, C, P,
                              false);
        });
        add_bias_rows(y, b, N, F, P);
        return y;
    }

    std::vector<T> ktbuf;
    const T* kt = nullptr;
    if (detail::narrow_product(P, F)) {
        ktbuf.resize(static_cast<std::size_t>(CKK * F));
        detail::transpose(k.data(), F, CKK, ktbuf.data());
        kt = ktbuf.data();
    }
    if (N > 1 || kt) {
        parallel_ranges(0, N, [&](std::int64_t n0, std::int64_t n1) {
            detail::ColBuffers<T> buf;
            for (std::int64_t n = n0; n < n1; ++n) {
                T* col = buf.get_col(CKK * P);
                detail::im2col(x.data() + n * C * H * W, C, H, W, spec, g, col);
                detail::kernel_times_col(k.data(), kt, col, y.data() + n * F * P, F, CKK, P,
                                         false, buf);
            }
        });
    } else {
        detail::ColBuffers<T> shared;
        shared.get_col(CKK * P);
        detail::im2col(x.data(), C, H, W, spec, g, shared.col.data());
        parallel_ranges(0, F, [&](std::int64_t f0, std::int64_t f1) {
            detail::mm_nn(k.data(), shared.col.data(), y.data(), F, CKK, P, false, f0, f1);
        });
    }
    add_bias_rows(y, b, N, F, P);
    return y;
}

// Accumulates input/kernel/bias gradients. Null destinations are skipped.
template <class T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& k, const ConvSpec& spec,
                     const TensorT<T>& dy, TensorT<T>* dx, TensorT<T>* dk, TensorT<T>* db) {
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t F = k.dim(0);
    const ConvGeom g = conv_geometry(H, W, spec);
    const std::int64_t CKK = C * spec.kh * spec.kw, P = g.oh * g.ow;
    TSPRED_CONV_TIMER("convB " + dims_str(k.dims()) + " P" + std::to_string(P), 2 * N, F, CKK, P);
    const bool pointwise = spec.kh == 1 && spec.kw == 1 && spec.stride == 1;

    if (dx && pointwise) {
        parallel_ranges(0, N, [&](std::int64_t n0, std::int64_t n1) {
            for (std::int64_t n = n0; n < n1; ++n)
                detail::mm_tn(k.data(), dy.data() + n * F * P, dx->data() + n * C * P, C, F, P,
                              true);
        });
    } else if (dx) {
        parallel_ranges(0, N, [&](std::int64_t n0, std::int64_t n1) {
            detail::ColBuffers<T> buf;
            for (std::int64_t n = n0; n < n1; ++n) {
                T* col = buf.get_col(CKK * P);
                detail::kernelT_times_x(k.data(), dy.data() + n * F * P, col, F, CKK, P, buf);
                detail::col2im_add(col, C, H, W, spec, g, dx->data() + n * C * H * W);
            }
        });
    }
    if (dk) {
        detail::ColBuffers<T> buf;
        for (std::int64_t n = 0; n < N; ++n) {
            T* colT = buf.get_aux(CKK * P);
            if (pointwise) {
                detail::transpose(x.data() + n * C * P, C, P, colT);
            } else {
                T* col = buf.get_col(CKK * P);
                detail::im2col(x.data() + n * C * H * W, C, H, W, spec, g, col);
                detail::transpose(col, CKK, P, colT);
            }
            parallel_ranges(0, F, [&](std::int64_t f0, std::int64_t f1) {
                detail::mm_nn(dy.data() + n * F * P, colT, dk->data(), F, P, CKK, true, f0, f1);
            });
        }
    }
    if (db) {
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t f = 0; f < F; ++f) {
                const T* plane = dy.data() + (n * F + f) * P;
                T acc(0);
                for (std::int64_t p = 0; p < P; ++p) acc += plane[p];
                (*db)[f] += acc;
            }
    }
}

// Adjoint of conv2d_forward over the same spec (bias aside). Kernel layout
// is [Cin, Cout, kh, kw]: the same buffer drives conv2d as [F=Cin, C=Cout].
template <class T>
TensorT<T> conv2d_transposed_forward(const TensorT<T>& x, const TensorT<T>& k,
                                     const TensorT<T>& b, const ConvSpec& spec) {
    conv_check_inputs(x, k, b, spec, true);
    const std::int64_t N = x.dim(0), F = k.dim(0), C = k.dim(1);
    Dims od = transposed_out_dims(x.dims(), spec, C);
    const std::int64_t OH = od[2], OW = od[3];
    const ConvGeom g = conv_geometry(OH, OW, spec);  // geometry of the adjoint conv
    if (g.oh != x.dim(2) || g.ow != x.dim(3))
        throw ShapeError("transposed conv input " + dims_str(x.dims()) +
                         " inconsistent with stride rule");
    const std::int64_t CKK = C * spec.kh * spec.kw, P = g.oh * g.ow;
    TensorT<T> y(od);
    TSPRED_CONV_TIMER("tconvF " + dims_str(k.dims()) + " P" + std::to_string(P), N, F, CKK, P);

    parallel_ranges(0, N, [&](std::int64_t n0, std::int64_t n1) {
        detail::ColBuffers<T> buf;
        for (std::int64_t n = n0; n < n1; ++n) {
            T* col = buf.get_col(CKK * P);
            detail::kernelT_times_x(k.data(), x.data() + n * F * P, col, F, CKK, P, buf);
            detail::col2im_add(col, C, OH, OW, spec, g, y.data() + n * C * OH * OW);
        }
    });
    add_bias_rows(y, b, N, C, OH * OW);
    return y;
}

template <class T>
void conv2d_transposed_backward(const TensorT<T>& x, const TensorT<T>& k, const ConvSpec& spec,
                                const TensorT<T>& dy, TensorT<T>* dx, TensorT<T>* dk,
                                TensorT<T>* db) {
    const std::int64_t N = x.dim(0), F = k.dim(0), C = k.dim(1);
    const std::int64_t OH = dy.dim(2), OW = dy.dim(3);
    const ConvGeom g = conv_geometry(OH, OW, spec);
    const std::int64_t CKK = C * spec.kh * spec.kw, P = g.oh * g.ow;
    TSPRED_CONV_TIMER("tconvB " + dims_str(k.dims()) + " P" + std::to_string(P), 2 * N, F, CKK, P);

    if (dx) {
        // d/dx of the adjoint is the forward conv applied to dy.
        std::vector<T> ktbuf;
        const T* kt = nullptr;
        if (detail::narrow_product(P, F)) {
            ktbuf.resize(static_cast<std::size_t>(CKK * F));
            detail::transpose(k.data(), F, CKK, ktbuf.data());
            kt = ktbuf.data();
        }
        parallel_ranges(0, N, [&](std::int64_t n0, std::int64_t n1) {
            detail::ColBuffers<T> buf;
            for (std::int64_t n = n0; n < n1; ++n) {
                T* col = buf.get_col(CKK * P);
                detail::im2col(dy.data() + n * C * OH * OW, C, OH, OW, spec, g, col);
                detail::kernel_times_col(k.data(), kt, col, dx->data() + n * F * P, F, CKK, P,
                                         true, buf);
            }
        });
    }
    if (dk) {
        detail::ColBuffers<T> buf;
        for (std::int64_t n = 0; n < N; ++n) {
            T* col = buf.get_col(CKK * P);
            detail::im2col(dy.data() + n * C * OH * OW, C, OH, OW, spec, g, col);
            T* colT = buf.get_aux(CKK * P);
            detail::transpose(col, CKK, P, colT);
            parallel_ranges(0, F, [&](std::int64_t f0, std::int64_t f1) {
                detail::mm_nn(x.data() + n * F * P, colT, dk->data(), F, P, CKK, true, f0, f1);
            });
        }
    }
    if (db) {
        const std::int64_t Q = OH * OW;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
                const T* plane = dy.data() + (n * C + c) * Q;
                T acc(0);
                for (std::int64_t q = 0; q < Q; ++q) acc += plane[q];
                (*db)[c] += acc;
            }
    }
}

}  // namespace tspred
