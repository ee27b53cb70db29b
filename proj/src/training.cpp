// SPDX-License-Identifier: Apache-2.0
#include "tspred/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tspred/config_json.hpp"
#include "tspred/serialize.hpp"

namespace tspred {

namespace {

void write_tensor(LeWriter& w, const std::string& name, const Tensor32& t) {
    if (name.size() > 0xFFFF) throw UsageError("tensor name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<std::uint32_t>(t.dim(i)));
    w.u8(0);  // dtype 0: 32-bit float
    static_assert(sizeof(float) == 4);
    w.raw(t.data(), static_cast<std::size_t>(t.numel()) * 4);
}

Tensor32 read_tensor(LeReader& r, std::string& name) {
    const std::uint16_t len = r.u16();
    name = r.bytes(len);
    const std::uint8_t rank = r.u8();
    if (rank > 8) throw FormatError("tensor " + name + ": implausible rank " +
                                    std::to_string(rank));
    Dims dims(rank);
    for (int i = 0; i < rank; ++i) dims[static_cast<std::size_t>(i)] = r.u32();
    const std::uint8_t dtype = r.u8();
    if (dtype != 0)
        throw FormatError("tensor " + name + ": unsupported dtype " + std::to_string(dtype));
    Tensor32 t(dims);
    r.raw(t.data(), static_cast<std::size_t>(t.numel()) * 4);
    return t;
}

}  // namespace

void save_checkpoint(Network32& net, SgdState<float>& opt, std::int64_t step, double lr,
                     const OptimizerConfig& ocfg, const std::string& path) {
    Json cfg;
    cfg["model"] = model_config_to_json(net.cfg);
    cfg["optimizer"] = {{"learning_rate", ocfg.learning_rate},
                        {"momentum", ocfg.momentum},
                        {"weight_decay", ocfg.weight_decay},
                        {"decay_factor", ocfg.decay_factor},
                        {"plateau_patience", ocfg.plateau_patience},
                        {"min_relative_improvement", ocfg.min_relative_improvement}};
    cfg["step"] = step;
    cfg["lr"] = lr;
    const std::string text = cfg.dump();

    auto f = open_output(path);
    LeWriter w{f};
    w.bytes("TSPR");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.bytes(text);
    const auto states = net.state_tensors();
    w.u32(static_cast<std::uint32_t>(net.params.size() * 2 + states.size()));
    for (const auto& p : net.params) write_tensor(w, p.name, p.value);
    for (std::size_t i = 0; i < net.params.size(); ++i)
        write_tensor(w, "opt.v." + net.params[i].name, opt.velocity[i]);
    for (const auto& [name, t] : states) write_tensor(w, name, *t);
    if (!f) throw FormatError("write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    auto f = open_input(path);
    LeReader r{f, 0, path};
    const std::string magic = r.bytes(4);
    if (magic != "TSPR")
        throw FormatError(path + ": bad magic at offset 0 (expected \"TSPR\")");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw FormatError(path + ": unsupported version field " + std::to_string(version));
    const std::uint32_t cfg_len = r.u32();
    LoadedCheckpoint out;
    out.config_text = r.bytes(cfg_len);
    Json cfg = Json::parse(out.config_text, nullptr, false);
    if (cfg.is_discarded()) throw FormatError(path + ": config field is not valid JSON");
    if (!cfg.contains("model")) throw FormatError(path + ": config lacks model field");
    out.net = Network32::build(model_config_from_json(cfg["model"]), 0);
    out.opt = SgdState<float>::init(out.net);
    out.step = cfg.value("step", std::int64_t(0));
    out.lr = cfg.value("lr", 0.0);

    const std::uint32_t count = r.u32();
    auto states = out.net.state_tensors();
    std::size_t loaded = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name;
        Tensor32 t = read_tensor(r, name);
        Tensor32* dst = nullptr;
        if (name.rfind("opt.v.", 0) == 0) {
            const std::string pname = name.substr(6);
            for (std::size_t j = 0; j < out.net.params.size(); ++j)
                if (out.net.params[j].name == pname) {
                    dst = &out.opt.velocity[j];
                    break;
                }
        } else if (name.rfind("state.", 0) == 0) {
            for (auto& [sname, st] : states)
                if (sname == name) {
                    dst = st;
                    break;
                }
        } else {
            for (auto& p : out.net.params)
                if (p.name == name) {
                    dst = &p.value;
                    break;
                }
        }
        if (!dst) throw FormatError(path + ": unknown tensor field \"" + name + "\"");
        if (!dst->same_dims(t))
            throw FormatError(path + ": tensor field \"" + name + "\" dims " +
                              dims_str(t.dims()) + " do not match configured " +
                              dims_str(dst->dims()));
        *dst = std::move(t);
        ++loaded;
    }
    if (loaded != out.net.params.size() * 2 + states.size())
        throw FormatError(path + ": checkpoint field count " + std::to_string(loaded) +
                          " does not cover the configured model");
    return out;
}

int rollout_loss(Graph<float>& g, Network32& net, const Network32::Staged& st,
                 const std::vector<int>& frame_ids, const std::vector<Tensor32>& targets,
                 bool train, RngStream* drop_rng) {
    auto fo = net.predict_on_graph(g, st, frame_ids,
                                   static_cast<std::int64_t>(targets.size()), train, drop_rng);
    const bool bce = net.cfg.output_nonlinearity == OutputNonlinearity::Sigmoid;
    int total = -1;
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const int l = bce ? g.bce_loss(fo.preds[k], targets[k])
                          : g.mse_loss(fo.preds[k], targets[k]);
        total = total < 0 ? l : g.add(total, l);
    }
    if (total < 0) throw UsageError("rollout_loss needs at least one target frame");
    return g.scale(total, 1.0f / static_cast<float>(targets.size()));
}

namespace {

// Eval-mode metric (nats/frame or MSE) over a set of sequences.
double validation_metric(Network32& net, const std::vector<SequenceRecord>& records,
                         std::int64_t t_frames, std::int64_t k_frames, double lo, double hi) {
    double acc = 0.0;
    const bool bce = net.cfg.output_nonlinearity == OutputNonlinearity::Sigmoid;
    for (const auto& rec : records) {
        std::vector<const SequenceRecord*> one{&rec};
        std::vector<Tensor32> inputs, targets;
        for (std::int64_t t = 0; t < t_frames; ++t)
            inputs.push_back(frames_to_tensor(one, t, lo, hi));
        for (std::int64_t k = 0; k < k_frames; ++k)
            targets.push_back(frames_to_tensor(one, t_frames + k, lo, hi));
        auto preds = net.predict(inputs, k_frames);
        double seq = 0.0;
        for (std::int64_t k = 0; k < k_frames; ++k)
            seq += bce ? bce_mean_forward(preds[static_cast<std::size_t>(k)],
                                          targets[static_cast<std::size_t>(k)])
                       : mse_mean_forward(preds[static_cast<std::size_t>(k)],
                                          targets[static_cast<std::size_t>(k)]);
        acc += seq / static_cast<double>(k_frames);
    }
    const double mean_pp = acc / static_cast<double>(records.size());
    return bce ? nats_per_frame(mean_pp, net.cfg) : mean_pp;
}

}  // namespace

TrainResult train_model(Network32& net, const OptimizerConfig& ocfg, const TrainConfig& tcfg,
                        const GeneratorConfig& gcfg, const std::vector<Sprite>& sprites,
                        const std::vector<SequenceRecord>* fixed_dataset) {
    ocfg.validate();
    const bool bce = net.cfg.output_nonlinearity == OutputNonlinearity::Sigmoid;
    const double lo = net.cfg.pixel_lo(), hi = net.cfg.pixel_hi();
    const std::int64_t T = net.cfg.input_frames, K = net.cfg.predict_frames;

    TrainResult result;
    result.final_lr = ocfg.learning_rate;
    std::ofstream log;
    if (!tcfg.out_dir.empty()) {
        std::filesystem::create_directories(tcfg.out_dir);
        result.log_path = tcfg.out_dir + "/train_log.jsonl";
        log.open(result.log_path, std::ios::trunc);
    }
    auto log_line = [&](const Json& j) {
        if (log.is_open()) log << j.dump() << "\n" << std::flush;
    };
    log_line(Json{{"event", "start"},
                  {"steps", tcfg.steps},
                  {"batch", tcfg.batch_size},
                  {"lr", ocfg.learning_rate}});
    if (tcfg.steps <= 0) return result;

    SgdState<float> opt = SgdState<float>::init(net);
    PlateauScheduler sched(ocfg);
    RngStream drop_rng = RngStream::keyed(tcfg.seed, 0xD0);

    std::unique_ptr<BatchStream> stream;
    if (fixed_dataset)
        stream = std::make_unique<BatchStream>(fixed_dataset, T, K, tcfg.batch_size, lo, hi,
                                               tcfg.seed);
    std::vector<SequenceRecord> val_set;
    if (!fixed_dataset && tcfg.validate_every > 0 && tcfg.val_sequences > 0) {
        // Held-out namespace: indices far above anything training touches.
        val_set = generate_many(gcfg, sprites, std::int64_t(1) << 40, tcfg.val_sequences);
    }

    double best_val = std::numeric_limits<double>::infinity();
    double lr = ocfg.learning_rate;
    std::vector<Tensor32> grads(net.params.size());

    for (std::int64_t step = 0; step < tcfg.steps; ++step) {
        Batch batch;
        if (stream) {
            batch = stream->next();
        } else {
            auto recs = generate_many(gcfg, sprites, step * tcfg.batch_size, tcfg.batch_size);
            std::vector<const SequenceRecord*> ptrs;
            for (const auto& r : recs) ptrs.push_back(&r);
            for (std::int64_t t = 0; t < T; ++t)
                batch.inputs.push_back(frames_to_tensor(ptrs, t, lo, hi));
            for (std::int64_t k = 0; k < K; ++k)
                batch.targets.push_back(frames_to_tensor(ptrs, T + k, lo, hi));
        }

        Graph<float> g;
        auto staged = net.stage(g);
        std::vector<int> frame_ids;
        frame_ids.reserve(batch.inputs.size());
        for (auto& f : batch.inputs) frame_ids.push_back(g.leaf(std::move(f)));
        const int loss_id = rollout_loss(g, net, staged, frame_ids, batch.targets, true,
                                         net.cfg.dropout_rate > 0 ? &drop_rng : nullptr);
        const double loss = g.value(loss_id)[0];
        const double metric = bce ? nats_per_frame(loss, net.cfg) : loss;

        if (!std::isfinite(loss)) {
            std::string dump;
            if (!tcfg.out_dir.empty()) {
                dump = tcfg.out_dir + "/nan_dump.tspr";
                save_checkpoint(net, opt, step, lr, ocfg, dump);
            }
            log_line(Json{{"event", "abort"}, {"step", step}, {"reason", "non-finite loss"}});
            throw std::runtime_error("non-finite training loss at step " + std::to_string(step) +
                                     (dump.empty() ? "" : "; state dumped to " + dump));
        }

        g.backward(loss_id, true);
        for (std::size_t i = 0; i < net.params.size(); ++i)
            grads[i] = g.grad(staged.at(static_cast<int>(i)));
        sgd_momentum_step(net, grads, opt, lr, ocfg);

        result.steps_run = step + 1;
        result.last_loss_per_pixel = loss;
        result.last_metric = metric;
        if (tcfg.log_every > 0 && (step % tcfg.log_every == 0 || step + 1 == tcfg.steps))
            log_line(Json{{"step", step}, {"loss_pp", loss}, {"metric", metric}, {"lr", lr}});

        if (tcfg.validate_every > 0 && (step + 1) % tcfg.validate_every == 0) {
            const double val =
                fixed_dataset ? validation_metric(net, *fixed_dataset, T, K, lo, hi)
                              : validation_metric(net, val_set, T, K, lo, hi);
            lr = sched.observe(val);
            result.final_lr = lr;
            log_line(Json{{"step", step}, {"val_metric", val}, {"lr", lr}});
            if (val < best_val) {
                best_val = val;
                result.best_val_metric = val;
                if (!tcfg.out_dir.empty())
                    save_checkpoint(net, opt, step + 1, lr, ocfg, tcfg.out_dir + "/best.tspr");
            }
        }
        if (tcfg.target_metric > 0.0 && metric < tcfg.target_metric) {
            result.reached_target = true;
            log_line(Json{{"event", "target_reached"}, {"step", step}, {"metric", metric}});
            break;
        }
    }
    if (!tcfg.out_dir.empty())
        save_checkpoint(net, opt, result.steps_run, lr, ocfg, tcfg.out_dir + "/last.tspr");
    log_line(Json{{"event", "done"},
                  {"steps_run", result.steps_run},
                  {"last_metric", result.last_metric}});
    return result;
}

}  // namespace tspred
