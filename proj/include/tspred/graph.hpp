// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tspred/conv.hpp"
#include "tspred/nn_ops.hpp"
#include "tspred/tensor.hpp"

namespace tspred {

// Reverse-mode tape. Creation order is a topological order, so the backward
// sweep walks node ids from the loss down to zero, visiting each node exactly
// once. Gradient buffers are allocated on first touch; parameters that never
// reach the loss keep an all-zero gradient.
template <class T>
class Graph {
public:
    using Tensor = TensorT<T>;
    using BackFn = std::function<void(Graph&, int)>;

    struct Node {
        Tensor value;
        Tensor grad;
        std::array<int, 3> parents{{-1, -1, -1}};
        BackFn back;  // empty for leaves
    };

    Graph() { nodes_.reserve(1024); }

    int leaf(Tensor v) { return push(std::move(v), {-1, -1, -1}, BackFn()); }

    std::size_t size() const { return nodes_.size(); }

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    // Gradient of the last backward() target w.r.t. node `id` (zeros if the
    // node is disconnected from it).
    const Tensor& grad(int id) { return grad_buf(id); }

    Tensor& grad_buf(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.numel() == 0 && n.value.numel() != 0) n.grad = Tensor::zeros(n.value.dims());
        return n.grad;
    }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse creation
    // order. With release=true, interior values and gradients are freed as
    // soon as backward has consumed them (leaves are kept).
    void backward(int loss_id, bool release = false) {
        Node& top = nodes_[static_cast<std::size_t>(loss_id)];
        if (top.value.numel() != 1) throw UsageError("backward target must be scalar");
        grad_buf(loss_id)[0] = T(1);
        for (int id = loss_id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.numel() == 0) continue;  // nothing flowed here
            if (n.back) {
                n.back(*this, id);
                if (release) {
                    n.grad.release();
                    n.value.release();
                }
            }
        }
    }

    // ---- differentiable operations -------------------------------------

    int conv2d(int x, int k, int b, const ConvSpec& spec) {
        Tensor y = conv2d_forward(value(x), value(k), value(b), spec);
        return push(std::move(y), {x, k, b}, [spec](Graph& g, int self) {
            Node& n = g.node_ref(self);
            conv2d_backward(g.value(n.parents[0]), g.value(n.parents[1]), spec, n.grad,
                            &g.grad_buf(n.parents[0]), &g.grad_buf(n.parents[1]),
                            &g.grad_buf(n.parents[2]));
        });
    }

    int conv2d_transposed(int x, int k, int b, const ConvSpec& spec) {
        Tensor y = conv2d_transposed_forward(value(x), value(k), value(b), spec);
        return push(std::move(y), {x, k, b}, [spec](Graph& g, int self) {
            Node& n = g.node_ref(self);
            conv2d_transposed_backward(g.value(n.parents[0]), g.value(n.parents[1]), spec, n.grad,
                                       &g.grad_buf(n.parents[0]), &g.grad_buf(n.parents[1]),
                                       &g.grad_buf(n.parents[2]));
        });
    }

    int batch_norm(int x, int gamma, int beta, BnState<T>* running, bool train) {
        BnCache<T> cache;
        Tensor y = batch_norm_forward(value(x), value(gamma), value(beta), running, train, &cache);
        return push(std::move(y), {x, gamma, beta}, [cache](Graph& g, int self) {
            Node& n = g.node_ref(self);
            batch_norm_backward(g.value(n.parents[0]), g.value(n.parents[1]), cache, n.grad,
                                &g.grad_buf(n.parents[0]), &g.grad_buf(n.parents[1]),
                                &g.grad_buf(n.parents[2]));
        });
    }

    int activation(int x, Act kind) {
        Tensor y = activation_forward(value(x), kind);
        return push(std::move(y), {x, -1, -1}, [kind](Graph& g, int self) {
            Node& n = g.node_ref(self);
            activation_backward(g.value(n.parents[0]), n.value, kind, n.grad,
                                g.grad_buf(n.parents[0]));
        });
    }

    int dropout(int x, double rate, bool train, RngStream& rng) {
        if (!train || rate == 0.0) {
            if (rate < 0.0 || rate >= 1.0) throw std::domain_error("dropout rate must be in [0,1)");
            return x;
        }
        Tensor mask;
        Tensor y = dropout_forward(value(x), rate, train, rng, &mask);
        return push(std::move(y), {x, -1, -1}, [mask](Graph& g, int self) {
            Node& n = g.node_ref(self);
            Tensor& dx = g.grad_buf(n.parents[0]);
            kernels::fma_map(n.grad.data(), mask.data(), dx.data(), dx.numel());
        });
    }

    int concat_channels(int a, int b) {
        Tensor y = concat_channels_forward(value(a), value(b));
        const std::int64_t ca = value(a).dim(1);
        return push(std::move(y), {a, b, -1}, [ca](Graph& g, int self) {
            Node& n = g.node_ref(self);
            Tensor& da = g.grad_buf(n.parents[0]);
            Tensor& db = g.grad_buf(n.parents[1]);
            const Tensor& dz = n.grad;
            const std::int64_t N = dz.dim(0), C = dz.dim(1), plane = dz.dim(2) * dz.dim(3);
            const std::int64_t cb = C - ca;
            for (std::int64_t nn = 0; nn < N; ++nn) {
                const T* src = dz.data() + nn * C * plane;
                kernels::acc_map(src, da.data() + nn * ca * plane, ca * plane);
                kernels::acc_map(src + ca * plane, db.data() + nn * cb * plane, cb * plane);
            }
        });
    }

    std::pair<int, int> split_channels(int x, std::int64_t at) {
        auto [a, b] = split_channels_forward(value(x), at);
        const std::int64_t c_total = value(x).dim(1);
        int ia = push(std::move(a), {x, -1, -1}, [at, c_total](Graph& g, int self) {
            g.add_channel_slice(self, 0, at, c_total);
        });
        int ib = push(std::move(b), {x, -1, -1}, [at, c_total](Graph& g, int self) {
            g.add_channel_slice(self, at, c_total - at, c_total);
        });
        return {ia, ib};
    }

    int add(int a, int b) {
        check_same_dims(value(a), value(b), "add");
        Tensor y(value(a).dims());
        kernels::add_map(value(a).data(), value(b).data(), y.data(), y.numel());
        return push(std::move(y), {a, b, -1}, [](Graph& g, int self) {
            Node& n = g.node_ref(self);
            kernels::acc_map(n.grad.data(), g.grad_buf(n.parents[0]).data(), n.grad.numel());
            kernels::acc_map(n.grad.data(), g.grad_buf(n.parents[1]).data(), n.grad.numel());
        });
    }

    int mul(int a, int b) {
        check_same_dims(value(a), value(b), "mul");
        Tensor y(value(a).dims());
        kernels::mul_map(value(a).data(), value(b).data(), y.data(), y.numel());
        return push(std::move(y), {a, b, -1}, [](Graph& g, int self) {
            Node& n = g.node_ref(self);
            const Tensor& va = g.value(n.parents[0]);
            const Tensor& vb = g.value(n.parents[1]);
            kernels::fma_map(n.grad.data(), vb.data(), g.grad_buf(n.parents[0]).data(),
                             n.grad.numel());
            kernels::fma_map(n.grad.data(), va.data(), g.grad_buf(n.parents[1]).data(),
                             n.grad.numel());
        });
    }

    int scale(int x, T c) {
        Tensor y(value(x).dims());
        kernels::scale_map(value(x).data(), c, y.data(), y.numel());
        return push(std::move(y), {x, -1, -1}, [c](Graph& g, int self) {
            Node& n = g.node_ref(self);
            kernels::axpy(n.grad.data(), c, g.grad_buf(n.parents[0]).data(), n.grad.numel());
        });
    }

    int gate_mix(int y, int z_prev, int w) {
        Tensor z = gate_mix_forward(value(y), value(z_prev), value(w));
        return push(std::move(z), {y, z_prev, w}, [](Graph& g, int self) {
            Node& n = g.node_ref(self);
            gate_mix_backward(g.value(n.parents[0]), g.value(n.parents[1]), g.value(n.parents[2]),
                              n.grad, &g.grad_buf(n.parents[0]), &g.grad_buf(n.parents[1]),
                              &g.grad_buf(n.parents[2]));
        });
    }

    int bce_loss(int pred, Tensor target) {
        const double v = bce_mean_forward(value(pred), target);
        Tensor y({1});
        y[0] = static_cast<T>(v);
        return push(std::move(y), {pred, -1, -1}, [target](Graph& g, int self) {
            Node& n = g.node_ref(self);
            bce_mean_backward(g.value(n.parents[0]), target, n.grad[0],
                              g.grad_buf(n.parents[0]));
        });
    }

    int mse_loss(int pred, Tensor target) {
        const double v = mse_mean_forward(value(pred), target);
        Tensor y({1});
        y[0] = static_cast<T>(v);
        return push(std::move(y), {pred, -1, -1}, [target](Graph& g, int self) {
            Node& n = g.node_ref(self);
            mse_mean_backward(g.value(n.parents[0]), target, n.grad[0],
                              g.grad_buf(n.parents[0]));
        });
    }

private:
    Node& node_ref(int id) { return nodes_[static_cast<std::size_t>(id)]; }

    void add_channel_slice(int self, std::int64_t c0, std::int64_t cn, std::int64_t c_total) {
        Node& n = node_ref(self);
        Tensor& dx = grad_buf(n.parents[0]);
        const Tensor& dz = n.grad;
        const std::int64_t N = dz.dim(0), plane = dz.dim(2) * dz.dim(3);
        for (std::int64_t nn = 0; nn < N; ++nn)
            kernels::acc_map(dz.data() + nn * cn * plane,
                             dx.data() + (nn * c_total + c0) * plane, cn * plane);
    }

    int push(Tensor v, std::array<int, 3> parents, BackFn fn) {
        Node n;
        n.value = std::move(v);
        n.parents = parents;
        n.back = std::move(fn);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
};

}  // namespace tspred
