// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "tspred/errors.hpp"
#include "tspred/rng.hpp"

namespace tspred {

using Dims = std::vector<std::int64_t>;

inline std::int64_t dims_numel(const Dims& d) {
    std::int64_t n = 1;
    for (auto v : d) n *= v;
    return n;
}

inline std::string dims_str(const Dims& d) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "x" : "") << d[i];
    os << ']';
    return os.str();
}

// Dense row-major N-d array with value semantics. Activations use NxCxHxW,
// convolution kernels FxCxKhxKw (transposed kernels CinxCoutxKhxKw).
template <class T>
class TensorT {
public:
    TensorT() = default;
    explicit TensorT(Dims dims) : dims_(std::move(dims)) {
        for (auto d : dims_)
            if (d < 0) throw ShapeError("negative extent in " + dims_str(dims_));
        data_.assign(static_cast<std::size_t>(dims_numel(dims_)), T(0));
    }
    TensorT(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != dims_numel(dims_))
            throw ShapeError("buffer length " + std::to_string(data_.size()) +
                             " does not match dims " + dims_str(dims_));
    }

    static TensorT zeros(Dims dims) { return TensorT(std::move(dims)); }
    static TensorT full(Dims dims, T v) {
        TensorT t(std::move(dims));
        for (auto& x : t.data_) x = v;
        return t;
    }
    static TensorT uniform(Dims dims, T lo, T hi, RngStream& rng) {
        TensorT t(std::move(dims));
        for (auto& x : t.data_) x = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(dims_.size()); }
    std::int64_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    const Dims& dims() const { return dims_; }
    bool same_dims(const TensorT& o) const { return dims_ == o.dims_; }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // NCHW accessor; only valid for rank-4 tensors.
    T& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
    }
    const T& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
    }

    bool all_finite() const {
        for (const T& x : data_)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    T min_value() const {
        T m = data_.empty() ? T(0) : data_[0];
        for (const T& x : data_) m = x < m ? x : m;
        return m;
    }
    T max_value() const {
        T m = data_.empty() ? T(0) : data_[0];
        for (const T& x : data_) m = x > m ? x : m;
        return m;
    }

    void fill(T v) {
        for (auto& x : data_) x = v;
    }

    // Release the buffer; the tensor becomes empty. Used by the tape to
    // shed intermediate activations once backward has consumed them.
    void release() {
        dims_.clear();
        data_.clear();
        data_.shrink_to_fit();
    }

    template <class U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(dims_, std::move(out));
    }

private:
    Dims dims_;
    std::vector<T> data_;
};

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;

template <class T>
void check_same_dims(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
    if (!a.same_dims(b))
        throw ShapeError(std::string(what) + ": dims " + dims_str(a.dims()) + " vs " +
                         dims_str(b.dims()));
}

}  // namespace tspred
