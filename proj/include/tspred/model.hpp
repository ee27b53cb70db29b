// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tspred/graph.hpp"

namespace tspred {

enum class ResidualMode { Full, SkipFromLastInput, None };
enum class CoreMode { Transformational, ConvLstmOnly };
enum class OutputNonlinearity { Sigmoid, Tanh };

inline const char* to_string(ResidualMode m) {
    switch (m) {
        case ResidualMode::Full: return "full";
        case ResidualMode::SkipFromLastInput: return "skip_from_last_input";
        default: return "none";
    }
}
inline const char* to_string(CoreMode m) {
    return m == CoreMode::Transformational ? "transformational" : "convlstm_only";
}
inline const char* to_string(OutputNonlinearity m) {
    return m == OutputNonlinearity::Sigmoid ? "sigmoid" : "tanh";
}

// Static description of one network. Encoder layers 0..L-2 are stride-2 4x4
// convolutions; the final encoder layer is stride-1 and emits n_s + n_d
// channels at 4x4 spatial. The decoder mirrors this. The recurrent core is a
// fixed three-layer ConvLSTM stack over [d, s] with 3x3 kernels; the state
// operator is a fixed three-layer stride-1 CNN over [g, s].
struct ModelConfig {
    std::int64_t input_size = 64;
    std::int64_t input_frames = 10;   // T
    std::int64_t predict_frames = 10; // K
    std::vector<std::int64_t> encoder_channels;  // last entry = n_s + n_d
    std::vector<std::int64_t> decoder_channels;  // last entry = image channels
    std::int64_t n_s = 64;
    std::int64_t n_d = 64;
    std::int64_t convlstm_hidden = 64;
    int convlstm_layers = 3;
    int phi_layers = 3;
    int phi_kernel = 4;
    ResidualMode residual_mode = ResidualMode::Full;
    CoreMode core_mode = CoreMode::Transformational;
    bool image_residual = false;
    OutputNonlinearity output_nonlinearity = OutputNonlinearity::Sigmoid;
    double dropout_rate = 0.0;  // encoder hidden layers only

    std::int64_t encoder_layers() const {
        return static_cast<std::int64_t>(encoder_channels.size());
    }
    std::int64_t image_channels() const {
        return decoder_channels.empty() ? 1 : decoder_channels.back();
    }
    // Pixel range of decoded images, used for scaling and metric ranges.
    double pixel_lo() const { return output_nonlinearity == OutputNonlinearity::Sigmoid ? 0.0 : -1.0; }
    double pixel_hi() const { return 1.0; }

    void validate() const {
        const std::int64_t L = encoder_layers();
        if (L < 2) throw ConfigError("encoder needs at least two layers");
        if (static_cast<std::int64_t>(decoder_channels.size()) != L)
            throw ConfigError("decoder depth must mirror encoder depth");
        if (n_s < 1 || n_d < 1) throw ConfigError("latent channel counts must be positive");
        if (encoder_channels.back() != n_s + n_d)
            throw ConfigError("final encoder layer must emit n_s + n_d channels, got " +
                              std::to_string(encoder_channels.back()));
        std::int64_t spatial = input_size;
        for (std::int64_t l = 0; l + 1 < L; ++l) {
            if (spatial % 2 != 0) throw ConfigError("spatial size not halvable at encoder layer " +
                                                    std::to_string(l));
            spatial /= 2;
        }
        if (spatial != 4) throw ConfigError("encoder output spatial must be 4x4, got " +
                                            std::to_string(spatial));
        for (auto c : encoder_channels)
            if (c < 1) throw ConfigError("encoder channel counts must be positive");
        for (auto c : decoder_channels)
            if (c < 1) throw ConfigError("decoder channel counts must be positive");
        if (convlstm_layers != 3) throw ConfigError("the recurrent core has exactly 3 layers");
        if (phi_layers != 3) throw ConfigError("the state operator has exactly 3 layers");
        if (phi_kernel != 3 && phi_kernel != 4)
            throw ConfigError("state-operator kernel must be 3x3 or 4x4");
        if (convlstm_hidden < 1) throw ConfigError("convlstm hidden channels must be positive");
        if (core_mode == CoreMode::ConvLstmOnly && convlstm_hidden != n_s)
            throw ConfigError("convlstm_only mode needs hidden channels == n_s");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("dropout rate must be in [0,1)");
        if (input_frames < 1) throw ConfigError("need at least one input frame");
        if (predict_frames < 0) throw ConfigError("predict_frames must be >= 0");
    }

    // Encoder layer l pre-nonlinearity output spatial extent.
    std::int64_t encoder_out_spatial(std::int64_t l) const {
        return l + 1 < encoder_layers() ? input_size >> (l + 1) : 4;
    }
    // Decoder layer l output spatial extent.
    std::int64_t decoder_out_spatial(std::int64_t l) const {
        return l + 1 < encoder_layers() ? std::int64_t(4) << (l + 1) : input_size;
    }
    // Encoder layer whose pre-nonlinearity map matches decoder layer l's
    // output spatial size, or -1 when none exists (the layer then carries its
    // own first prediction forward).
    std::int64_t residual_seed_layer(std::int64_t l) const {
        const std::int64_t j = encoder_layers() - 3 - l;
        return j >= 0 ? j : -1;
    }
};

// Small training rig for quick experiments on two cores.
inline ModelConfig desk_preset() {
    ModelConfig c;
    c.input_size = 64;
    c.encoder_channels = {16, 16, 24, 24, 32};
    c.decoder_channels = {24, 24, 16, 16, 1};
    c.n_s = 16;
    c.n_d = 16;
    c.convlstm_hidden = 16;
    return c;
}

inline ModelConfig mnist_paper_preset() {
    ModelConfig c;
    c.input_size = 64;
    c.encoder_channels = {64, 64, 96, 96, 128};
    c.decoder_channels = {96, 96, 64, 64, 1};
    c.n_s = 64;
    c.n_d = 64;
    c.convlstm_hidden = 64;
    return c;
}

inline ModelConfig kth_paper_preset() {
    ModelConfig c;
    c.input_size = 128;
    c.encoder_channels = {64, 128, 256, 512, 512, 256};
    c.decoder_channels = {512, 512, 256, 128, 64, 1};
    c.n_s = 128;
    c.n_d = 128;
    c.convlstm_hidden = 128;
    c.image_residual = true;
    c.output_nonlinearity = OutputNonlinearity::Tanh;
    c.dropout_rate = 0.5;
    return c;
}

inline ModelConfig ucf_paper_preset() {
    ModelConfig c;
    c.input_size = 256;
    c.input_frames = 2;
    c.predict_frames = 1;
    c.encoder_channels = {64, 128, 256, 256, 512, 512, 512};
    c.decoder_channels = {512, 512, 256, 256, 128, 64, 1};
    c.n_s = 256;
    c.n_d = 256;
    c.convlstm_hidden = 256;
    c.phi_kernel = 3;
    c.image_residual = true;
    c.output_nonlinearity = OutputNonlinearity::Tanh;
    c.dropout_rate = 0.5;
    return c;
}

// Tiny double-precision configuration for finite-difference checking.
inline ModelConfig miniature_preset() {
    ModelConfig c;
    c.input_size = 8;
    c.input_frames = 3;
    c.predict_frames = 2;
    c.encoder_channels = {6, 8};
    c.decoder_channels = {6, 1};
    c.n_s = 4;
    c.n_d = 4;
    c.convlstm_hidden = 4;
    c.image_residual = true;
    return c;
}

inline ModelConfig preset_by_name(const std::string& name) {
    if (name == "desk") return desk_preset();
    if (name == "mnist-paper") return mnist_paper_preset();
    if (name == "kth-paper") return kth_paper_preset();
    if (name == "ucf-paper") return ucf_paper_preset();
    if (name == "mini") return miniature_preset();
    throw ConfigError("unknown preset: " + name);
}

inline constexpr int kLstmGates = 4;  // packed input, forget, candidate, output

// Per-component parameter census.
struct Census {
    std::vector<std::pair<std::string, std::int64_t>> groups;
    std::int64_t total() const {
        std::int64_t t = 0;
        for (auto& g : groups) t += g.second;
        return t;
    }
    std::int64_t by_prefix(const std::string& p) const {
        std::int64_t t = 0;
        for (auto& g : groups)
            if (g.first.rfind(p, 0) == 0) t += g.second;
        return t;
    }
};

template <class T>
class Network {
public:
    struct Param {
        std::string name;
        TensorT<T> value;
        bool decay = false;  // weight decay applies to encoder/decoder kernels only
    };

    ModelConfig cfg;
    std::vector<Param> params;
    std::vector<BnState<T>> enc_bn;  // encoder layers 1..L-1
    std::vector<BnState<T>> dec_bn;  // decoder layers 0..L-2

    struct PairIdx {
        int w = -1, b = -1;
    };
    std::vector<PairIdx> enc_conv, enc_bn_idx, phi_conv, dec_tconv, dec_bn_idx, res_map;
    std::vector<std::array<int, 3>> lstm;  // {wx, wh, b} per layer
    std::vector<int> res_proj;             // -1 when the seed needs no projection
    PairIdx img_map;

    Network() = default;

    static Network build(const ModelConfig& config, std::uint64_t seed) {
        config.validate();
        Network net;
        net.cfg = config;
        RngStream rng = RngStream::keyed(seed, 0xC0DE);
        const std::int64_t L = config.encoder_layers();

        auto add = [&net](const std::string& name, TensorT<T> v, bool decay) {
            net.params.push_back(Param{name, std::move(v), decay});
            return static_cast<int>(net.params.size()) - 1;
        };
        auto kernel_init = [&rng](Dims d, std::int64_t fan) {
            const T bound = static_cast<T>(std::sqrt(1.0 / static_cast<double>(fan)));
            return TensorT<T>::uniform(std::move(d), -bound, bound, rng);
        };

        // encoder
        std::int64_t cin = config.image_channels();
        for (std::int64_t l = 0; l < L; ++l) {
            const std::int64_t f = config.encoder_channels[static_cast<std::size_t>(l)];
            PairIdx p;
            p.w = add("enc.conv" + std::to_string(l) + ".w",
                      kernel_init({f, cin, 4, 4}, cin * 16), true);
            p.b = add("enc.conv" + std::to_string(l) + ".b", TensorT<T>::zeros({f}), false);
            net.enc_conv.push_back(p);
            if (l >= 1) {
                PairIdx q;
                q.w = add("enc.bn" + std::to_string(l) + ".g", TensorT<T>::full({f}, T(1)), false);
                q.b = add("enc.bn" + std::to_string(l) + ".b", TensorT<T>::zeros({f}), false);
                net.enc_bn_idx.push_back(q);
                net.enc_bn.emplace_back(f);
            }
            cin = f;
        }

        // recurrent core: three ConvLSTM layers over [d, s]
        std::int64_t xin = config.n_d + config.n_s;
        const std::int64_t hid = config.convlstm_hidden;
        for (int l = 0; l < config.convlstm_layers; ++l) {
            std::array<int, 3> ids{};
            ids[0] = add("core.lstm" + std::to_string(l) + ".wx",
                         kernel_init({kLstmGates * hid, xin, 3, 3}, xin * 9), false);
            ids[1] = add("core.lstm" + std::to_string(l) + ".wh",
                         kernel_init({kLstmGates * hid, hid, 3, 3}, hid * 9), false);
            TensorT<T> bias = TensorT<T>::zeros({kLstmGates * hid});
            for (std::int64_t i = hid; i < 2 * hid; ++i) bias[i] = T(1);  // forget gate
            ids[2] = add("core.lstm" + std::to_string(l) + ".b", std::move(bias), false);
            net.lstm.push_back(ids);
            xin = hid;
        }

        // state operator
        if (config.core_mode == CoreMode::Transformational) {
            std::int64_t pin = hid + config.n_s;
            const int kk = config.phi_kernel;
            for (int l = 0; l < config.phi_layers; ++l) {
                PairIdx p;
                p.w = add("phi.conv" + std::to_string(l) + ".w",
                          kernel_init({config.n_s, pin, kk, kk}, pin * kk * kk), false);
                p.b = add("phi.conv" + std::to_string(l) + ".b", TensorT<T>::zeros({config.n_s}),
                          false);
                net.phi_conv.push_back(p);
                pin = config.n_s;
            }
        }

        // decoder
        cin = config.n_s;
        for (std::int64_t l = 0; l < L; ++l) {
            const std::int64_t f = config.decoder_channels[static_cast<std::size_t>(l)];
            PairIdx p;
            p.w = add("dec.tconv" + std::to_string(l) + ".w",
                      kernel_init({cin, f, 4, 4}, cin * 16), true);
            p.b = add("dec.tconv" + std::to_string(l) + ".b", TensorT<T>::zeros({f}), false);
            net.dec_tconv.push_back(p);
            if (l + 1 < L) {
                PairIdx q;
                q.w = add("dec.bn" + std::to_string(l) + ".g", TensorT<T>::full({f}, T(1)), false);
                q.b = add("dec.bn" + std::to_string(l) + ".b", TensorT<T>::zeros({f}), false);
                net.dec_bn_idx.push_back(q);
                net.dec_bn.emplace_back(f);
            }
            cin = f;
        }

        // weighted residual machinery: one K+1 parameter map per hidden
        // decoder layer, plus 1x1 seed projections where encoder and decoder
        // channel counts disagree
        net.res_map.assign(static_cast<std::size_t>(L - 1), PairIdx{});
        net.res_proj.assign(static_cast<std::size_t>(L - 1), -1);
        if (config.residual_mode != ResidualMode::None) {
            for (std::int64_t l = 0; l + 1 < L; ++l) {
                const std::int64_t k = config.decoder_channels[static_cast<std::size_t>(l)];
                PairIdx p;
                p.w = add("res.map" + std::to_string(l) + ".w", kernel_init({1, k, 1, 1}, k),
                          false);
                p.b = add("res.map" + std::to_string(l) + ".b", TensorT<T>::zeros({1}), false);
                net.res_map[static_cast<std::size_t>(l)] = p;
                const std::int64_t j = config.residual_seed_layer(l);
                if (j >= 0) {
                    const std::int64_t ce = config.encoder_channels[static_cast<std::size_t>(j)];
                    if (ce != k)
                        net.res_proj[static_cast<std::size_t>(l)] =
                            add("res.proj" + std::to_string(l) + ".w",
                                kernel_init({k, ce, 1, 1}, ce), false);
                }
            }
            if (config.image_residual) {
                const std::int64_t ic = config.image_channels();
                net.img_map.w = add("res.img.w", kernel_init({1, ic, 1, 1}, ic), false);
                net.img_map.b = add("res.img.b", TensorT<T>::zeros({1}), false);
            }
        }
        return net;
    }

    Census census() const {
        Census c;
        std::map<std::string, std::int64_t> acc;
        std::vector<std::string> order;
        for (const auto& p : params) {
            const std::string group = p.name.substr(0, p.name.rfind('.'));
            if (!acc.count(group)) order.push_back(group);
            acc[group] += p.value.numel();
        }
        for (const auto& g : order) c.groups.emplace_back(g, acc[g]);
        return c;
    }

    // Parameters the weighted residual scheme adds on top of the plain
    // architecture: sum of (K^l + 1) weight maps, seed projections, and the
    // image-level map when enabled.
    std::int64_t residual_param_count() const {
        if (cfg.residual_mode == ResidualMode::None) return 0;
        std::int64_t t = 0;
        const std::int64_t L = cfg.encoder_layers();
        for (std::int64_t l = 0; l + 1 < L; ++l) {
            const std::int64_t k = cfg.decoder_channels[static_cast<std::size_t>(l)];
            t += k + 1;
            const std::int64_t j = cfg.residual_seed_layer(l);
            if (j >= 0) {
                const std::int64_t ce = cfg.encoder_channels[static_cast<std::size_t>(j)];
                if (ce != k) t += k * ce;
            }
        }
        if (cfg.image_residual) t += cfg.image_channels() + 1;
        return t;
    }

    std::int64_t param_count() const {
        std::int64_t t = 0;
        for (const auto& p : params) t += p.value.numel();
        return t;
    }

    const Param& param_by_name(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return p;
        throw UsageError("no parameter named " + name);
    }

    // Named persistent state beside the parameters (BN running statistics).
    std::vector<std::pair<std::string, TensorT<T>*>> state_tensors() {
        std::vector<std::pair<std::string, TensorT<T>*>> out;
        for (std::size_t i = 0; i < enc_bn.size(); ++i) {
            out.emplace_back("state.enc.bn" + std::to_string(i + 1) + ".mean", &enc_bn[i].mean);
            out.emplace_back("state.enc.bn" + std::to_string(i + 1) + ".var", &enc_bn[i].var);
        }
        for (std::size_t i = 0; i < dec_bn.size(); ++i) {
            out.emplace_back("state.dec.bn" + std::to_string(i) + ".mean", &dec_bn[i].mean);
            out.emplace_back("state.dec.bn" + std::to_string(i) + ".var", &dec_bn[i].var);
        }
        return out;
    }

    // ---- forward wiring --------------------------------------------------

    // Parameter leaf ids on one graph, in params order.
    struct Staged {
        std::vector<int> ids;
        int at(int param_idx) const { return ids[static_cast<std::size_t>(param_idx)]; }
    };

    Staged stage(Graph<T>& g) const {
        Staged s;
        s.ids.reserve(params.size());
        for (const auto& p : params) s.ids.push_back(g.leaf(p.value));
        return s;
    }

    struct EncodeOut {
        int s = -1;
        int d = -1;
        std::vector<int> pre;  // pre-nonlinearity maps of layers 0..L-2
    };

    // frame -> (s, d) plus the activations residual seeding needs at t = T.
    EncodeOut encode_frame(Graph<T>& g, const Staged& st, int frame, bool train,
                           RngStream* drop_rng) {
        const std::int64_t L = cfg.encoder_layers();
        EncodeOut out;
        int x = frame;
        for (std::int64_t l = 0; l < L; ++l) {
            ConvSpec spec;
            spec.kh = spec.kw = 4;
            spec.stride = l + 1 < L ? 2 : 1;
            spec.filters = static_cast<int>(cfg.encoder_channels[static_cast<std::size_t>(l)]);
            const auto& ci = enc_conv[static_cast<std::size_t>(l)];
            x = g.conv2d(x, st.at(ci.w), st.at(ci.b), spec);
            if (l >= 1) {
                const auto& bi = enc_bn_idx[static_cast<std::size_t>(l - 1)];
                x = g.batch_norm(x, st.at(bi.w), st.at(bi.b), &enc_bn[static_cast<std::size_t>(l - 1)],
                                 train);
            }
            if (l + 1 < L) {
                out.pre.push_back(x);
                x = g.activation(x, Act::LeakyRelu);
                if (cfg.dropout_rate > 0.0 && drop_rng)
                    x = g.dropout(x, cfg.dropout_rate, train, *drop_rng);
            } else {
                x = g.activation(x, Act::Tanh);
            }
        }
        auto [s, d] = g.split_channels(x, cfg.n_s);
        out.s = s;
        out.d = d;
        return out;
    }

    struct CoreVars {
        std::vector<std::pair<int, int>> hc;  // (h, c) per layer
        int g = -1;                           // top-layer hidden output
    };

    CoreVars core_init(Graph<T>& g, std::int64_t batch) const {
        CoreVars cv;
        for (int l = 0; l < cfg.convlstm_layers; ++l) {
            int h = g.leaf(TensorT<T>::zeros({batch, cfg.convlstm_hidden, 4, 4}));
            int c = g.leaf(TensorT<T>::zeros({batch, cfg.convlstm_hidden, 4, 4}));
            cv.hc.emplace_back(h, c);
        }
        return cv;
    }

    // One ConvLSTM cell update: gates from conv(x) + conv(h) + bias.
    std::pair<int, int> convlstm_step(Graph<T>& g, const Staged& st, int layer, int x,
                                      std::pair<int, int> state) const {
        const auto& ids = lstm[static_cast<std::size_t>(layer)];
        const std::int64_t hid = cfg.convlstm_hidden;
        ConvSpec sx;
        sx.kh = sx.kw = 3;
        sx.stride = 1;
        sx.filters = static_cast<int>(kLstmGates * hid);
        int zero_b = g.leaf(TensorT<T>::zeros({kLstmGates * hid}));
        int zx = g.conv2d(x, st.at(ids[0]), st.at(ids[2]), sx);
        int zh = g.conv2d(state.first, st.at(ids[1]), zero_b, sx);
        int z = g.add(zx, zh);
        auto [zi, rest1] = g.split_channels(z, hid);
        auto [zf, rest2] = g.split_channels(rest1, hid);
        auto [zc, zo] = g.split_channels(rest2, hid);
        int i = g.activation(zi, Act::Sigmoid);
        int f = g.activation(zf, Act::Sigmoid);
        int cand = g.activation(zc, Act::Tanh);
        int o = g.activation(zo, Act::Sigmoid);
        int c_new = g.add(g.mul(f, state.second), g.mul(i, cand));
        int h_new = g.mul(o, g.activation(c_new, Act::Tanh));
        return {h_new, c_new};
    }

    // Feeds [d, s] through the stack; the transformation estimate is the top
    // layer's hidden state.
    void accumulate_transform(Graph<T>& g, const Staged& st, CoreVars& cv, int d, int s) const {
        int x = g.concat_channels(d, s);
        for (int l = 0; l < cfg.convlstm_layers; ++l) {
            cv.hc[static_cast<std::size_t>(l)] =
                convlstm_step(g, st, l, x, cv.hc[static_cast<std::size_t>(l)]);
            x = cv.hc[static_cast<std::size_t>(l)].first;
        }
        cv.g = x;
    }

    // s_next = Phi(g, s): three stride-1 convolutions over [g, s], tanh out.
    int apply_transform(Graph<T>& g, const Staged& st, int g_est, int s) const {
        if (cfg.core_mode == CoreMode::ConvLstmOnly) return g_est;
        int x = g.concat_channels(g_est, s);
        for (int l = 0; l < cfg.phi_layers; ++l) {
            ConvSpec spec;
            spec.kh = spec.kw = cfg.phi_kernel;
            spec.stride = 1;
            spec.filters = static_cast<int>(cfg.n_s);
            const auto& p = phi_conv[static_cast<std::size_t>(l)];
            x = g.conv2d(x, st.at(p.w), st.at(p.b), spec);
            x = g.activation(x, l + 1 < cfg.phi_layers ? Act::LeakyRelu : Act::Tanh);
        }
        return x;
    }

    struct DecodeCarry {
        std::vector<int> z;  // per hidden decoder layer; -1 means carry-free
        int img = -1;
    };

    // Residual seeds for the first prediction step, from the t = T encoder
    // activations (1x1-projected where channel counts differ).
    DecodeCarry seed_carry(Graph<T>& g, const Staged& st, const EncodeOut& enc_T,
                           int last_frame) const {
        DecodeCarry carry;
        const std::int64_t L = cfg.encoder_layers();
        carry.z.assign(static_cast<std::size_t>(L - 1), -1);
        if (cfg.residual_mode == ResidualMode::None) return carry;
        for (std::int64_t l = 0; l + 1 < L; ++l) {
            const std::int64_t j = cfg.residual_seed_layer(l);
            if (j < 0) continue;
            int src = enc_T.pre[static_cast<std::size_t>(j)];
            const int proj = res_proj[static_cast<std::size_t>(l)];
            if (proj >= 0) {
                ConvSpec spec;
                spec.kh = spec.kw = 1;
                spec.stride = 1;
                spec.filters = static_cast<int>(cfg.decoder_channels[static_cast<std::size_t>(l)]);
                int zero_b = g.leaf(TensorT<T>::zeros({spec.filters}));
                src = g.conv2d(src, st.at(proj), zero_b, spec);
            }
            carry.z[static_cast<std::size_t>(l)] = src;
        }
        if (cfg.image_residual) carry.img = last_frame;
        return carry;
    }

    // One decoder pass. Weighted residual mixing happens on the
    // pre-nonlinearity map of each hidden layer and after the output
    // nonlinearity at the image level.
    int decode_frame(Graph<T>& g, const Staged& st, int s_hat, DecodeCarry& carry, bool train) {
        const std::int64_t L = cfg.encoder_layers();
        const bool mix = cfg.residual_mode != ResidualMode::None;
        const bool advance = cfg.residual_mode == ResidualMode::Full;
        int x = s_hat;
        for (std::int64_t l = 0; l < L; ++l) {
            ConvSpec spec;
            spec.kh = spec.kw = 4;
            spec.stride = l + 1 < L ? 2 : 1;
            spec.filters = static_cast<int>(cfg.decoder_channels[static_cast<std::size_t>(l)]);
            const auto& di = dec_tconv[static_cast<std::size_t>(l)];
            x = g.conv2d_transposed(x, st.at(di.w), st.at(di.b), spec);
            if (l + 1 < L) {
                const auto& bi = dec_bn_idx[static_cast<std::size_t>(l)];
                x = g.batch_norm(x, st.at(bi.w), st.at(bi.b), &dec_bn[static_cast<std::size_t>(l)],
                                 train);
                if (mix) {
                    const int zprev = carry.z[static_cast<std::size_t>(l)];
                    if (zprev >= 0) x = mix_layer(g, st, l, x, zprev);
                    if (advance) carry.z[static_cast<std::size_t>(l)] = x;
                }
                x = g.activation(x, Act::LeakyRelu);
            } else {
                x = g.activation(x, cfg.output_nonlinearity == OutputNonlinearity::Sigmoid
                                        ? Act::Sigmoid
                                        : Act::Tanh);
                if (mix && cfg.image_residual && carry.img >= 0) {
                    ConvSpec ws;
                    ws.kh = ws.kw = 1;
                    ws.stride = 1;
                    ws.filters = 1;
                    int w = g.conv2d(x, st.at(img_map.w), st.at(img_map.b), ws);
                    x = g.gate_mix(x, carry.img, w);
                    if (advance) carry.img = x;
                }
            }
        }
        return x;
    }

    struct ForwardOut {
        std::vector<int> preds;  // K decoded frame ids
        int s_last = -1;
        CoreVars core;
    };

    // Full rollout on a graph: encode T frames while accumulating the
    // transformation, then predict K frames recursively. Predicted latents
    // are never re-encoded; prediction-step core input is [0, s_hat].
    ForwardOut predict_on_graph(Graph<T>& g, const Staged& st, const std::vector<int>& frame_ids,
                                std::int64_t predict_frames, bool train, RngStream* drop_rng) {
        if (static_cast<std::int64_t>(frame_ids.size()) != cfg.input_frames)
            throw UsageError("expected " + std::to_string(cfg.input_frames) + " input frames, got " +
                             std::to_string(frame_ids.size()));
        const std::int64_t batch = g.value(frame_ids[0]).dim(0);
        for (int f : frame_ids) {
            const auto& v = g.value(f);
            if (v.rank() != 4 || v.dim(1) != cfg.image_channels() || v.dim(2) != cfg.input_size ||
                v.dim(3) != cfg.input_size)
                throw ShapeError("input frame dims " + dims_str(v.dims()) +
                                 " do not match configured " + std::to_string(cfg.input_size));
        }

        ForwardOut out;
        out.core = core_init(g, batch);
        EncodeOut enc;
        for (std::int64_t t = 0; t < cfg.input_frames; ++t) {
            enc = encode_frame(g, st, frame_ids[static_cast<std::size_t>(t)], train, drop_rng);
            accumulate_transform(g, st, out.core, enc.d, enc.s);
        }
        if (predict_frames == 0) return out;

        DecodeCarry carry = seed_carry(g, st, enc, frame_ids.back());
        int zero_d = g.leaf(TensorT<T>::zeros({batch, cfg.n_d, 4, 4}));
        int s_prev = enc.s;
        for (std::int64_t k = 0; k < predict_frames; ++k) {
            if (k > 0) accumulate_transform(g, st, out.core, zero_d, s_prev);
            int s_hat = apply_transform(g, st, out.core.g, s_prev);
            out.preds.push_back(decode_frame(g, st, s_hat, carry, train));
            s_prev = s_hat;
        }
        out.s_last = s_prev;
        return out;
    }

    // Inference entry point: eval-mode batch norm, dropout off.
    std::vector<TensorT<T>> predict(const std::vector<TensorT<T>>& inputs,
                                    std::int64_t predict_frames) {
        Graph<T> g;
        Staged st = stage(g);
        std::vector<int> ids;
        ids.reserve(inputs.size());
        for (const auto& f : inputs) ids.push_back(g.leaf(f));
        ForwardOut fo = predict_on_graph(g, st, ids, predict_frames, false, nullptr);
        std::vector<TensorT<T>> out;
        out.reserve(fo.preds.size());
        for (int id : fo.preds) out.push_back(g.value(id));
        return out;
    }

private:
    int mix_layer(Graph<T>& g, const Staged& st, std::int64_t l, int y, int z_prev) const {
        const auto& m = res_map[static_cast<std::size_t>(l)];
        ConvSpec ws;
        ws.kh = ws.kw = 1;
        ws.stride = 1;
        ws.filters = 1;
        int w = g.conv2d(y, st.at(m.w), st.at(m.b), ws);
        return g.gate_mix(y, z_prev, w);
    }
};

using Network32 = Network<float>;
using Network64 = Network<double>;

}  // namespace tspred
