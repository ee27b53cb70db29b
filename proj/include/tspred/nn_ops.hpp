// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tspred/parallel.hpp"
#include "tspred/rng.hpp"
#include "tspred/tensor.hpp"

namespace tspred {

enum class Act { LeakyRelu, Tanh, Sigmoid };

// Pinned constants shared by every preset.
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kBnEpsilon = 1e-3;
inline constexpr double kBnMomentum = 0.99;
inline constexpr double kBceClamp = 1e-7;

template <class T>
T sigmoid_scalar(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                     : std::exp(x) / (T(1) + std::exp(x));
}

namespace kernels {

// For slope < 1, leaky_relu(x) == max(x, slope*x); the max form compiles
// branch-free.
template <class T>
TSPRED_NOINLINE void lrelu(const T* x, T* y, std::int64_t n) {
    const T a = static_cast<T>(kLeakySlope);
    for (std::int64_t i = 0; i < n; ++i) y[i] = std::max(x[i], a * x[i]);
}

template <class T>
TSPRED_NOINLINE void tanh_map(const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

template <class T>
TSPRED_NOINLINE void sigmoid_map(const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = sigmoid_scalar(x[i]);
}

template <class T>
TSPRED_NOINLINE void lrelu_bwd(const T* x, const T* dy, T* dx, std::int64_t n) {
    const T a = static_cast<T>(kLeakySlope);
    for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (x[i] > T(0) ? T(1) : a);
}

template <class T>
TSPRED_NOINLINE void tanh_bwd(const T* y, const T* dy, T* dx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (T(1) - y[i] * y[i]);
}

template <class T>
TSPRED_NOINLINE void sigmoid_bwd(const T* y, const T* dy, T* dx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
}

template <class T>
TSPRED_NOINLINE void affine_norm(const T* x, T* y, std::int64_t n, T mu, T inv, T g, T b) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = g * (x[i] - mu) * inv + b;
}

template <class T>
TSPRED_NOINLINE void moments(const T* x, std::int64_t n, double* sum, double* sq) {
    double s = 0.0, q = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        s += v;
        q += v * v;
    }
    *sum += s;
    *sq += q;
}

template <class T>
TSPRED_NOINLINE void bn_bwd_sums(const T* x, const T* dy, std::int64_t n, T mu, T inv,
                                 double* sum_dy, double* sum_dy_xhat) {
    double a = 0.0, b = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        a += static_cast<double>(dy[i]);
        b += static_cast<double>(dy[i]) * static_cast<double>((x[i] - mu) * inv);
    }
    *sum_dy += a;
    *sum_dy_xhat += b;
}

template <class T>
TSPRED_NOINLINE void bn_bwd_train(const T* x, const T* dy, T* dx, std::int64_t n, T mu, T inv,
                                  T coeff, T m, T sdy, T sdx) {
    for (std::int64_t i = 0; i < n; ++i) {
        const T xhat = (x[i] - mu) * inv;
        dx[i] += coeff * (m * dy[i] - sdy - xhat * sdx);
    }
}

template <class T>
TSPRED_NOINLINE void axpy(const T* x, T a, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
TSPRED_NOINLINE void add_map(const T* a, const T* b, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
TSPRED_NOINLINE void mul_map(const T* a, const T* b, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
TSPRED_NOINLINE void fma_map(const T* a, const T* b, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <class T>
TSPRED_NOINLINE void scale_map(const T* x, T a, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a * x[i];
}

template <class T>
TSPRED_NOINLINE void acc_map(const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += x[i];
}

template <class T>
TSPRED_NOINLINE void mix_row(const T* y, const T* z_prev, const T* s, T* z, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) z[i] = y[i] + s[i] * (z_prev[i] - y[i]);
}

template <class T>
TSPRED_NOINLINE void mix_row_bwd(const T* y, const T* z_prev, const T* s, const T* dz, T* dy,
                                 T* dz_prev, T* ds, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        dy[i] += dz[i] * (T(1) - s[i]);
        dz_prev[i] += dz[i] * s[i];
        ds[i] += dz[i] * (z_prev[i] - y[i]);
    }
}

}  // namespace kernels

template <class T>
TensorT<T> activation_forward(const TensorT<T>& x, Act kind) {
    TensorT<T> y(x.dims());
    const T* xd = x.data();
    T* yd = y.data();
    const std::int64_t n = x.numel();
    parallel_ranges(0, n, [&](std::int64_t i0, std::int64_t i1) {
        switch (kind) {
            case Act::LeakyRelu: kernels::lrelu(xd + i0, yd + i0, i1 - i0); break;
            case Act::Tanh: kernels::tanh_map(xd + i0, yd + i0, i1 - i0); break;
            case Act::Sigmoid: kernels::sigmoid_map(xd + i0, yd + i0, i1 - i0); break;
        }
    }, 1 << 15);
    return y;
}

// dx += dy * f'(x), with f' written in terms of x (LeakyRelu) or y (others).
template <class T>
void activation_backward(const TensorT<T>& x, const TensorT<T>& y, Act kind, const TensorT<T>& dy,
                         TensorT<T>& dx) {
    const std::int64_t n = x.numel();
    switch (kind) {
        case Act::LeakyRelu: kernels::lrelu_bwd(x.data(), dy.data(), dx.data(), n); break;
        case Act::Tanh: kernels::tanh_bwd(y.data(), dy.data(), dx.data(), n); break;
        case Act::Sigmoid: kernels::sigmoid_bwd(y.data(), dy.data(), dx.data(), n); break;
    }
}

// Running statistics of one batch-norm layer. Updated in train mode, read in
// eval mode; persisted alongside parameters in checkpoints.
template <class T>
struct BnState {
    TensorT<T> mean;  // [C]
    TensorT<T> var;   // [C]
    explicit BnState(std::int64_t c = 0)
        : mean(TensorT<T>::zeros({c})), var(TensorT<T>::full({c}, T(1))) {}
};

// Per-call cache the backward pass needs (batch statistics, not activations).
template <class T>
struct BnCache {
    std::vector<T> mean, inv_std;
    bool train = false;
};

template <class T>
TensorT<T> batch_norm_forward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                              BnState<T>* running, bool train, BnCache<T>* cache) {
    if (x.rank() != 4) throw ShapeError("batch_norm expects NxCxHxW");
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (gamma.numel() != C || beta.numel() != C)
        throw ShapeError("batch_norm affine params must have C entries");
    const std::int64_t M = N * H * W;
    if (train && M < 2) throw std::domain_error("batch_norm train mode needs batch*spatial >= 2");

    TensorT<T> y(x.dims());
    if (cache) {
        cache->mean.assign(static_cast<std::size_t>(C), T(0));
        cache->inv_std.assign(static_cast<std::size_t>(C), T(0));
        cache->train = train;
    }
    const T eps = static_cast<T>(kBnEpsilon);
    const std::int64_t plane = H * W;
    parallel_ranges(0, C, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            T mu, inv;
            if (train) {
                double sum = 0.0, sq = 0.0;
                for (std::int64_t n = 0; n < N; ++n)
                    kernels::moments(x.data() + (n * C + c) * plane, plane, &sum, &sq);
                const double m = sum / static_cast<double>(M);
                const double v = std::max(0.0, sq / static_cast<double>(M) - m * m);
                mu = static_cast<T>(m);
                inv = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
                if (running) {
                    const T mom = static_cast<T>(kBnMomentum);
                    running->mean[c] = mom * running->mean[c] + (T(1) - mom) * mu;
                    running->var[c] = mom * running->var[c] + (T(1) - mom) * static_cast<T>(v);
                }
            } else {
                mu = running ? running->mean[c] : T(0);
                const T v = running ? running->var[c] : T(1);
                inv = T(1) / std::sqrt(v + eps);
            }
            if (cache) {
                cache->mean[static_cast<std::size_t>(c)] = mu;
                cache->inv_std[static_cast<std::size_t>(c)] = inv;
            }
            for (std::int64_t n = 0; n < N; ++n)
                kernels::affine_norm(x.data() + (n * C + c) * plane,
                                     y.data() + (n * C + c) * plane, plane, mu, inv, gamma[c],
                                     beta[c]);
        }
    });
    return y;
}

template <class T>
void batch_norm_backward(const TensorT<T>& x, const TensorT<T>& gamma, const BnCache<T>& cache,
                         const TensorT<T>& dy, TensorT<T>* dx, TensorT<T>* dgamma,
                         TensorT<T>* dbeta) {
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t M = N * H * W;
    const std::int64_t plane = H * W;
    parallel_ranges(0, C, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const T mu = cache.mean[static_cast<std::size_t>(c)];
            const T inv = cache.inv_std[static_cast<std::size_t>(c)];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::int64_t n = 0; n < N; ++n)
                kernels::bn_bwd_sums(x.data() + (n * C + c) * plane,
                                     dy.data() + (n * C + c) * plane, plane, mu, inv, &sum_dy,
                                     &sum_dy_xhat);
            if (dbeta) (*dbeta)[c] += static_cast<T>(sum_dy);
            if (dgamma) (*dgamma)[c] += static_cast<T>(sum_dy_xhat);
            if (!dx) continue;
            const T g = gamma[c];
            if (cache.train) {
                const T coeff = g * inv / static_cast<T>(M);
                for (std::int64_t n = 0; n < N; ++n)
                    kernels::bn_bwd_train(x.data() + (n * C + c) * plane,
                                          dy.data() + (n * C + c) * plane,
                                          dx->data() + (n * C + c) * plane, plane, mu, inv, coeff,
                                          static_cast<T>(M), static_cast<T>(sum_dy),
                                          static_cast<T>(sum_dy_xhat));
            } else {
                for (std::int64_t n = 0; n < N; ++n)
                    kernels::axpy(dy.data() + (n * C + c) * plane,
                                  g * inv, dx->data() + (n * C + c) * plane, plane);
            }
        }
    });
}

// Train mode zeroes with probability `rate` and scales survivors by
// 1/(1-rate); the mask (already scaled) is written to *mask for backward.
template <class T>
TensorT<T> dropout_forward(const TensorT<T>& x, double rate, bool train, RngStream& rng,
                           TensorT<T>* mask) {
    if (rate < 0.0 || rate >= 1.0) throw std::domain_error("dropout rate must be in [0,1)");
    if (!train || rate == 0.0) {
        if (mask) *mask = TensorT<T>();
        return x;
    }
    TensorT<T> y(x.dims());
    TensorT<T> m(x.dims());
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T s = rng.next_double() < rate ? T(0) : scale;
        m[i] = s;
        y[i] = x[i] * s;
    }
    if (mask) *mask = std::move(m);
    return y;
}

template <class T>
TensorT<T> concat_channels_forward(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 4 || b.rank() != 4) throw ShapeError("concat_channels expects NxCxHxW");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ShapeError("concat_channels spatial/batch mismatch: " + dims_str(a.dims()) +
                         " vs " + dims_str(b.dims()));
    const std::int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    TensorT<T> y({N, Ca + Cb, H, W});
    const std::int64_t plane = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy(a.data() + n * Ca * plane, a.data() + (n + 1) * Ca * plane,
                  y.data() + n * (Ca + Cb) * plane);
        std::copy(b.data() + n * Cb * plane, b.data() + (n + 1) * Cb * plane,
                  y.data() + (n * (Ca + Cb) + Ca) * plane);
    }
    return y;
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> split_channels_forward(const TensorT<T>& x, std::int64_t at) {
    if (x.rank() != 4) throw ShapeError("split_channels expects NxCxHxW");
    if (at < 0 || at > x.dim(1)) throw ShapeError("split index out of range");
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    TensorT<T> a({N, at, H, W}), b({N, C - at, H, W});
    const std::int64_t plane = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy(x.data() + n * C * plane, x.data() + (n * C + at) * plane,
                  a.data() + n * at * plane);
        std::copy(x.data() + (n * C + at) * plane, x.data() + (n + 1) * C * plane,
                  b.data() + n * (C - at) * plane);
    }
    return {std::move(a), std::move(b)};
}

// z = (1 - sigmoid(w)) .* y + sigmoid(w) .* z_prev, with w a one-channel map
// broadcast across the channel axis.
template <class T>
TensorT<T> gate_mix_forward(const TensorT<T>& y, const TensorT<T>& z_prev, const TensorT<T>& w) {
    check_same_dims(y, z_prev, "gate_mix operands");
    if (w.rank() != 4 || w.dim(1) != 1 || w.dim(0) != y.dim(0) || w.dim(2) != y.dim(2) ||
        w.dim(3) != y.dim(3))
        throw ShapeError("gate_mix weight map must be Nx1xHxW matching operands");
    const std::int64_t N = y.dim(0), C = y.dim(1), P = y.dim(2) * y.dim(3);
    TensorT<T> z(y.dims());
    std::vector<T> s(static_cast<std::size_t>(P));
    for (std::int64_t n = 0; n < N; ++n) {
        kernels::sigmoid_map(w.data() + n * P, s.data(), P);
        for (std::int64_t c = 0; c < C; ++c)
            kernels::mix_row(y.data() + (n * C + c) * P, z_prev.data() + (n * C + c) * P,
                             s.data(), z.data() + (n * C + c) * P, P);
    }
    return z;
}

template <class T>
void gate_mix_backward(const TensorT<T>& y, const TensorT<T>& z_prev, const TensorT<T>& w,
                       const TensorT<T>& dz, TensorT<T>* dy, TensorT<T>* dz_prev, TensorT<T>* dw) {
    const std::int64_t N = y.dim(0), C = y.dim(1), P = y.dim(2) * y.dim(3);
    std::vector<T> s(static_cast<std::size_t>(P)), ds(static_cast<std::size_t>(P));
    for (std::int64_t n = 0; n < N; ++n) {
        kernels::sigmoid_map(w.data() + n * P, s.data(), P);
        std::fill(ds.begin(), ds.end(), T(0));
        for (std::int64_t c = 0; c < C; ++c)
            kernels::mix_row_bwd(y.data() + (n * C + c) * P, z_prev.data() + (n * C + c) * P,
                                 s.data(), dz.data() + (n * C + c) * P,
                                 dy->data() + (n * C + c) * P, dz_prev->data() + (n * C + c) * P,
                                 ds.data(), P);
        T* dwp = dw->data() + n * P;
        for (std::int64_t p = 0; p < P; ++p)
            dwp[p] += ds[static_cast<std::size_t>(p)] * s[static_cast<std::size_t>(p)] *
                      (T(1) - s[static_cast<std::size_t>(p)]);
    }
}

// Elementwise binary cross entropy in nats, averaged over all elements.
// Predictions are clamped to [kBceClamp, 1-kBceClamp] before the logs.
template <class T>
double bce_mean_forward(const TensorT<T>& pred, const TensorT<T>& target) {
    check_same_dims(pred, target, "bce_loss");
    const double lo = kBceClamp, hi = 1.0 - kBceClamp;
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const double t = static_cast<double>(target[i]);
        if (t < 0.0 || t > 1.0) throw std::domain_error("bce target outside [0,1]");
        double p = static_cast<double>(pred[i]);
        p = p < lo ? lo : (p > hi ? hi : p);
        acc += -(t * std::log(p) + (1.0 - t) * std::log1p(-p));
    }
    return acc / static_cast<double>(pred.numel());
}

template <class T>
void bce_mean_backward(const TensorT<T>& pred, const TensorT<T>& target, T upstream,
                       TensorT<T>& dpred) {
    const T lo = static_cast<T>(kBceClamp), hi = static_cast<T>(1.0 - kBceClamp);
    const T inv_n = upstream / static_cast<T>(pred.numel());
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const T p = pred[i];
        if (p < lo || p > hi) continue;  // clamped region has zero slope
        dpred[i] += inv_n * (p - target[i]) / (p * (T(1) - p));
    }
}

template <class T>
double mse_mean_forward(const TensorT<T>& pred, const TensorT<T>& target) {
    check_same_dims(pred, target, "mse_loss");
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

template <class T>
void mse_mean_backward(const TensorT<T>& pred, const TensorT<T>& target, T upstream,
                       TensorT<T>& dpred) {
    const T inv_n = upstream * T(2) / static_cast<T>(pred.numel());
    for (std::int64_t i = 0; i < pred.numel(); ++i) dpred[i] += inv_n * (pred[i] - target[i]);
}

}  // namespace tspred
