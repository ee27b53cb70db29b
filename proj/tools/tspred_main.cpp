// SPDX-License-Identifier: Apache-2.0
//
// tspred: generate moving-sprite datasets, train and evaluate the
// sequence-prediction network, render prediction strips, and verify
// gradients. All randomness flows from --seed; --threads 1 gives bitwise
// deterministic runs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tspred/config_json.hpp"
#include "tspred/gradcheck.hpp"
#include "tspred/metrics.hpp"
#include "tspred/strip.hpp"

namespace ts = tspred;

namespace {

struct CommonArgs {
    std::uint64_t seed = 0;
    int threads = 0;
    std::string preset = "desk";
    std::string ablation = "none";
    std::string config_path;
    std::vector<std::string> sets;
    std::string sprites_path;
    bool shapes = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_model_opts) {
    cmd->add_option("--seed", a.seed, "Root seed for all randomness");
    cmd->add_option("--threads", a.threads, "Worker threads (1 = bitwise deterministic)");
    if (with_model_opts) {
        cmd->add_option("--preset", a.preset,
                        "Configuration preset: desk, mnist-paper, kth-paper, ucf-paper, mini");
        cmd->add_option("--ablation", a.ablation,
                        "Architecture ablation: none, no-core, skip-last-input, no-residual");
        cmd->add_option("--config", a.config_path, "JSON config file merged over the preset");
        cmd->add_option("--set", a.sets, "Override config entries, e.g. --set model.n_s=32");
    }
    cmd->add_option("--sprites", a.sprites_path, "IDX sprite file (e.g. MNIST images)");
    cmd->add_flag("--shapes", a.shapes, "Use the built-in shape sprites (default)");
}

void apply_threads(const CommonArgs& a) {
    ts::set_thread_count(a.threads > 0 ? a.threads : ts::hardware_threads());
}

std::vector<ts::Sprite> load_sprite_set(const CommonArgs& a) {
    if (!a.sprites_path.empty()) return ts::load_sprites_idx(a.sprites_path);
    return ts::builtin_shapes();
}

ts::ConfigBundle make_bundle(const CommonArgs& a) {
    ts::ConfigBundle base = ts::bundle_for_preset(a.preset);
    ts::Json doc = base.to_json();
    if (!a.config_path.empty()) {
        std::ifstream f(a.config_path);
        if (!f) throw ts::UsageError("cannot open config file " + a.config_path);
        ts::Json file_doc = ts::Json::parse(f, nullptr, false);
        if (file_doc.is_discarded())
            throw ts::UsageError("config file " + a.config_path + " is not valid JSON");
        ts::merge_json(doc, file_doc);
    }
    for (const auto& s : a.sets) ts::apply_set_override(doc, s);
    ts::ConfigBundle b = ts::ConfigBundle::from_json(doc);
    ts::apply_ablation(b.model, a.ablation);
    b.model.validate();
    b.optimizer.validate();
    return b;
}

ts::Json census_json(const ts::Network32& net) {
    ts::Json j;
    for (const auto& [name, count] : net.census().groups) j[name] = count;
    j["total"] = net.param_count();
    return j;
}

int cmd_gen(const CommonArgs& a, const std::string& out_dir, std::int64_t num_test,
            std::int64_t frames, std::int64_t size, std::int64_t digits) {
    apply_threads(a);
    ts::GeneratorConfig g;
    g.canvas = size;
    g.frames = frames;
    g.sprites = digits;
    g.seed = a.seed;
    const auto sprites = load_sprite_set(a);
    std::filesystem::create_directories(out_dir);
    auto records = ts::generate_many(g, sprites, 0, num_test);
    const std::string path = out_dir + "/test.seq0";
    ts::write_dataset(records, path);
    std::printf("wrote %lld sequences (%lldx%lldx%lld) to %s\n",
                static_cast<long long>(num_test), static_cast<long long>(frames),
                static_cast<long long>(size), static_cast<long long>(size), path.c_str());
    return 0;
}

int cmd_train(const CommonArgs& a, const std::string& out_dir, const std::string& data_path,
              std::int64_t steps) {
    apply_threads(a);
    ts::ConfigBundle b = make_bundle(a);
    if (steps > 0) b.train.steps = steps;
    b.train.seed = a.seed;
    b.train.out_dir = out_dir;
    b.generator.seed = a.seed;

    auto net = ts::Network32::build(b.model, a.seed);
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream f(out_dir + "/census.json");
        f << census_json(net).dump(2) << "\n";
    }
    std::printf("parameters: %lld\n", static_cast<long long>(net.param_count()));

    std::vector<ts::SequenceRecord> fixed;
    const auto sprites = load_sprite_set(a);
    ts::TrainResult r;
    if (!data_path.empty()) {
        fixed = ts::read_dataset(data_path);
        r = ts::train_model(net, b.optimizer, b.train, b.generator, sprites, &fixed);
    } else {
        r = ts::train_model(net, b.optimizer, b.train, b.generator, sprites, nullptr);
    }
    std::printf("steps %lld  last metric %.4f  best val %.4f  lr %.6g\n",
                static_cast<long long>(r.steps_run), r.last_metric, r.best_val_metric,
                r.final_lr);
    return 0;
}

int cmd_predict(const CommonArgs& a, const std::string& ckpt, const std::string& data_path,
                std::int64_t index, const std::string& out_path) {
    apply_threads(a);
    auto loaded = ts::load_checkpoint(ckpt);
    auto& net = loaded.net;
    auto records = ts::read_dataset(data_path);
    if (index < 0 || index >= static_cast<std::int64_t>(records.size()))
        throw ts::UsageError("--index out of range");
    const auto& rec = records[static_cast<std::size_t>(index)];
    const std::int64_t T = net.cfg.input_frames, K = net.cfg.predict_frames;
    if (rec.frames < T + K)
        throw ts::UsageError("record has " + std::to_string(rec.frames) + " frames, need " +
                             std::to_string(T + K));
    const double lo = net.cfg.pixel_lo(), hi = net.cfg.pixel_hi();
    std::vector<const ts::SequenceRecord*> one{&rec};
    std::vector<ts::Tensor32> inputs;
    for (std::int64_t t = 0; t < T; ++t) inputs.push_back(ts::frames_to_tensor(one, t, lo, hi));
    auto preds = net.predict(inputs, K);

    // Rows: inputs / ground-truth future / prediction.
    std::vector<std::vector<ts::GrayImage>> rows(3);
    for (std::int64_t t = 0; t < T; ++t)
        rows[0].push_back(ts::tensor_to_gray(inputs[static_cast<std::size_t>(t)], 0, lo, hi));
    for (std::int64_t k = 0; k < K; ++k)
        rows[1].push_back(
            ts::tensor_to_gray(ts::frames_to_tensor(one, T + k, lo, hi), 0, lo, hi));
    for (std::int64_t k = 0; k < K; ++k)
        rows[2].push_back(ts::tensor_to_gray(preds[static_cast<std::size_t>(k)], 0, lo, hi));
    ts::write_pgm(ts::render_strip(rows), out_path);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& ckpt, const std::string& data_path,
             const std::string& out_path, bool image_metrics) {
    apply_threads(a);
    auto loaded = ts::load_checkpoint(ckpt);
    auto& net = loaded.net;
    auto records = ts::read_dataset(data_path);
    const std::int64_t T = net.cfg.input_frames, K = net.cfg.predict_frames;
    const double lo = net.cfg.pixel_lo(), hi = net.cfg.pixel_hi();

    ts::PredictFn model_fn = [&net](const std::vector<ts::Tensor32>& inputs, std::int64_t) {
        return net.predict(inputs, net.cfg.predict_frames);
    };
    auto model_rep = ts::evaluate_model(model_fn, records, T, K, lo, hi, image_metrics);
    auto base_rep = ts::evaluate_model(ts::copy_last_frame_baseline(K), records, T, K, lo, hi,
                                       image_metrics);

    ts::Json j = ts::Json::parse(model_rep.to_json());
    const ts::Json bj = ts::Json::parse(base_rep.to_json());
    for (auto it = bj.begin(); it != bj.end(); ++it) j["baseline_" + it.key()] = it.value();
    const std::string text = j.dump(2);
    if (!out_path.empty()) {
        std::ofstream f(out_path);
        f << text << "\n";
    }
    std::printf("%s\n", text.c_str());
    return 0;
}

int cmd_ablate(const CommonArgs& a, const std::string& out_dir, std::int64_t steps,
               std::int64_t batch) {
    apply_threads(a);
    const char* variants[] = {"none", "no-core", "skip-last-input", "no-residual"};
    ts::Json report;
    const auto sprites = load_sprite_set(a);
    bool ok = true;

    ts::ConfigBundle base = make_bundle(a);
    auto full_net = ts::Network32::build(base.model, a.seed);
    const std::int64_t full_total = full_net.param_count();

    for (const char* v : variants) {
        CommonArgs va = a;
        va.ablation = v;
        ts::ConfigBundle b = make_bundle(va);
        b.train.steps = steps;
        b.train.batch_size = batch;
        b.train.validate_every = 0;
        b.train.seed = a.seed;
        b.generator.seed = a.seed;
        auto net = ts::Network32::build(b.model, a.seed);
        ts::Json entry;
        entry["census"] = census_json(net);

        // Expected census deltas from build arithmetic.
        std::int64_t expected_delta = 0;
        if (std::string(v) == "no-core") expected_delta = full_net.census().by_prefix("phi.");
        else if (std::string(v) == "no-residual") expected_delta = full_net.residual_param_count();
        const std::int64_t actual_delta = full_total - net.param_count();
        entry["census_delta"] = actual_delta;
        entry["census_delta_expected"] = expected_delta;
        if (actual_delta != expected_delta) ok = false;

        try {
            auto r = ts::train_model(net, b.optimizer, b.train, b.generator, sprites, nullptr);
            entry["steps_run"] = r.steps_run;
            entry["last_metric"] = r.last_metric;
        } catch (const std::exception& e) {
            entry["error"] = e.what();
            ok = false;
        }
        report[v] = entry;
        std::printf("%-16s delta %lld (expected %lld)\n", v,
                    static_cast<long long>(actual_delta),
                    static_cast<long long>(expected_delta));
    }
    report["ok"] = ok;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(out_dir + "/ablate_report.json");
        f << report.dump(2) << "\n";
    }
    std::printf("ablation harness: %s\n", ok ? "ok" : "FAILED");
    return ok ? 0 : 1;
}

int cmd_gradcheck(const CommonArgs& a, double tol, double fd_step, std::int64_t batch,
                  std::int64_t limit) {
    apply_threads(a);
    auto cfg = ts::miniature_preset();
    auto report = ts::run_gradcheck(cfg, a.seed, fd_step, batch, tol, limit);
    for (const auto& g : report.groups)
        std::printf("group %-16s worst_rel %.3e over %lld entries\n", g.name.c_str(),
                    g.worst_rel, static_cast<long long>(g.checked));
    std::printf("worst relative error: %.3e (tolerance %.1e): %s\n", report.worst_rel,
                report.tolerance, report.pass() ? "pass" : "FAIL");
    return report.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"moving-sprite sequence prediction"};
    app.require_subcommand(1);

    CommonArgs gen_a, train_a, pred_a, eval_a, abl_a, gc_a;
    std::string gen_out, train_out = "runs/train", train_data, pred_ckpt, pred_data, pred_out;
    std::string eval_ckpt, eval_data, eval_out, abl_out = "runs/ablate";
    std::int64_t gen_num = 1000, gen_frames = 20, gen_size = 64, gen_digits = 2;
    std::int64_t train_steps = 0, pred_index = 0, abl_steps = 500, abl_batch = 8, gc_batch = 2;
    std::int64_t gc_limit = 0;
    double gc_tol = 1e-4, gc_fd = 1e-6;
    bool eval_image_metrics = false;

    auto* gen = app.add_subcommand("gen", "Generate a sprite-sequence dataset");
    add_common(gen, gen_a, false);
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--num-test", gen_num, "Number of sequences");
    gen->add_option("--frames", gen_frames, "Frames per sequence");
    gen->add_option("--size", gen_size, "Canvas size in pixels");
    gen->add_option("--digits", gen_digits, "Sprites per sequence");

    auto* train = app.add_subcommand("train", "Train a model");
    add_common(train, train_a, true);
    train->add_option("--out", train_out, "Run directory for logs and checkpoints");
    train->add_option("--data", train_data, "Fixed dataset to train on (default: procedural)");
    train->add_option("--steps", train_steps, "Training steps (overrides config)");

    auto* pred = app.add_subcommand("predict", "Render an input/truth/prediction strip");
    add_common(pred, pred_a, false);
    pred->add_option("--ckpt", pred_ckpt, "Checkpoint file")->required();
    pred->add_option("--data", pred_data, "Dataset file")->required();
    pred->add_option("--index", pred_index, "Sequence index");
    pred->add_option("--out", pred_out, "Output PGM path")->required();

    auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint against a dataset");
    add_common(evalc, eval_a, false);
    evalc->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
    evalc->add_option("--data", eval_data, "Dataset file")->required();
    evalc->add_option("--out", eval_out, "Report JSON path");
    evalc->add_flag("--image-metrics", eval_image_metrics, "Also report PSNR and SSIM");

    auto* abl = app.add_subcommand("ablate", "Build, census-check and smoke-train the ablations");
    add_common(abl, abl_a, true);
    abl->add_option("--out", abl_out, "Report directory");
    abl->add_option("--steps", abl_steps, "Training steps per variant");
    abl->add_option("--batch", abl_batch, "Batch size for the smoke training");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check on the miniature model");
    add_common(gc, gc_a, false);
    gc->add_option("--tol", gc_tol, "Relative-error tolerance");
    gc->add_option("--fd-step", gc_fd, "Finite-difference step");
    gc->add_option("--batch", gc_batch, "Batch size for the check");
    gc->add_option("--limit", gc_limit, "Check at most this many entries per group (0 = all)");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen(gen_a, gen_out, gen_num, gen_frames, gen_size, gen_digits);
        if (train->parsed()) return cmd_train(train_a, train_out, train_data, train_steps);
        if (pred->parsed()) return cmd_predict(pred_a, pred_ckpt, pred_data, pred_index, pred_out);
        if (evalc->parsed())
            return cmd_eval(eval_a, eval_ckpt, eval_data, eval_out, eval_image_metrics);
        if (abl->parsed()) return cmd_ablate(abl_a, abl_out, abl_steps, abl_batch);
        if (gc->parsed()) return cmd_gradcheck(gc_a, gc_tol, gc_fd, gc_batch, gc_limit);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // --help exits 0
    } catch (const ts::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ts::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
