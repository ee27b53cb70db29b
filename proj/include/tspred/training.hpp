// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tspred/data.hpp"
#include "tspred/model.hpp"

namespace tspred {

struct OptimizerConfig {
    double learning_rate = 1.0;
    double momentum = 0.5;
    double weight_decay = 1e-4;  // encoder/decoder kernels only
    double decay_factor = 10.0;
    int plateau_patience = 5;                 // consecutive validations
    double min_relative_improvement = 1e-3;

    void validate() const {
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
        if (decay_factor <= 1.0) throw ConfigError("decay_factor must exceed 1");
        if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
        if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
        if (plateau_patience < 1) throw ConfigError("plateau patience must be >= 1");
    }
};

// v <- momentum*v + (g + wd*theta for decayed tensors); theta <- theta - lr*v
template <class T>
struct SgdState {
    std::vector<TensorT<T>> velocity;
    static SgdState init(const Network<T>& net) {
        SgdState s;
        s.velocity.reserve(net.params.size());
        for (const auto& p : net.params) s.velocity.push_back(TensorT<T>::zeros(p.value.dims()));
        return s;
    }
};

template <class T>
void sgd_momentum_step(Network<T>& net, const std::vector<TensorT<T>>& grads, SgdState<T>& state,
                       double lr, const OptimizerConfig& cfg) {
    if (grads.size() != net.params.size() || state.velocity.size() != net.params.size())
        throw ShapeError("optimizer state out of step with parameters");
    const T beta = static_cast<T>(cfg.momentum);
    const T wd = static_cast<T>(cfg.weight_decay);
    const T step = static_cast<T>(lr);
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        auto& p = net.params[i];
        auto& v = state.velocity[i];
        const auto& g = grads[i];
        check_same_dims(p.value, g, "sgd gradient");
        const bool decay = p.decay && wd != T(0);
        for (std::int64_t j = 0; j < p.value.numel(); ++j) {
            const T eff = decay ? g[j] + wd * p.value[j] : g[j];
            v[j] = beta * v[j] + eff;
            p.value[j] -= step * v[j];
        }
    }
}

// Divides the learning rate by decay_factor after `patience` consecutive
// validations without a relative improvement of min_relative_improvement
// over the best loss seen. The counter resets when a decay fires.
class PlateauScheduler {
public:
    explicit PlateauScheduler(const OptimizerConfig& cfg) : cfg_(cfg), lr_(cfg.learning_rate) {}

    double observe(double val_loss) {
        if (val_loss < best_ * (1.0 - cfg_.min_relative_improvement)) {
            best_ = val_loss;
            stale_ = 0;
        } else if (++stale_ >= cfg_.plateau_patience) {
            lr_ /= cfg_.decay_factor;
            stale_ = 0;
        }
        return lr_;
    }

    double lr() const { return lr_; }
    double best() const { return best_; }

private:
    OptimizerConfig cfg_;
    double lr_;
    double best_ = std::numeric_limits<double>::infinity();
    int stale_ = 0;
};

// ---- checkpointing ------------------------------------------------------

struct LoadedCheckpoint {
    Network32 net;
    SgdState<float> opt;
    std::string config_text;  // embedded JSON, exactly as stored
    std::int64_t step = 0;
    double lr = 0.0;
};

// Format: magic "TSPR", u32-LE version=1, u32-LE config length + UTF-8
// config, u32-LE tensor count; per tensor: u16-LE name length, name, u8
// rank, u32-LE dims[rank], u8 dtype (0 = f32), little-endian payload.
void save_checkpoint(Network32& net, SgdState<float>& opt, std::int64_t step, double lr,
                     const OptimizerConfig& ocfg, const std::string& path);
LoadedCheckpoint load_checkpoint(const std::string& path);

// ---- training loop ------------------------------------------------------

struct TrainConfig {
    std::int64_t steps = 1000;
    std::int64_t batch_size = 16;
    std::int64_t validate_every = 500;
    std::int64_t val_sequences = 256;
    std::int64_t log_every = 50;
    double target_metric = 0.0;  // early exit when train metric falls below; 0 disables
    std::uint64_t seed = 0;
    std::string out_dir;  // empty: keep everything in memory, write no files
};

struct TrainResult {
    std::int64_t steps_run = 0;
    double last_loss_per_pixel = 0.0;
    double last_metric = 0.0;  // BCE nats/frame for sigmoid presets, MSE otherwise
    double best_val_metric = std::numeric_limits<double>::infinity();
    double final_lr = 0.0;
    bool reached_target = false;
    std::string log_path;
};

// Trains on procedurally generated batches, or on `fixed_dataset` when given
// (validation then uses the same fixed set). A non-finite loss dumps a
// checkpoint and throws.
TrainResult train_model(Network32& net, const OptimizerConfig& ocfg, const TrainConfig& tcfg,
                        const GeneratorConfig& gcfg, const std::vector<Sprite>& sprites,
                        const std::vector<SequenceRecord>* fixed_dataset = nullptr);

// Mean per-pixel loss of one rollout against targets, recorded on the graph.
// Returns the loss node id; BCE for sigmoid-output models, MSE for tanh.
int rollout_loss(Graph<float>& g, Network32& net, const Network32::Staged& st,
                 const std::vector<int>& frame_ids, const std::vector<Tensor32>& targets,
                 bool train, RngStream* drop_rng);

// nats/frame view of a mean-per-pixel BCE loss.
inline double nats_per_frame(double loss_per_pixel, const ModelConfig& cfg) {
    return loss_per_pixel * static_cast<double>(cfg.input_size * cfg.input_size *
                                                cfg.image_channels());
}

}  // namespace tspred
