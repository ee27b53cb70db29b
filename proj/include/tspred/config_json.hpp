// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

#include "tspred/data.hpp"
#include "tspred/model.hpp"
#include "tspred/training.hpp"

namespace tspred {

using Json = nlohmann::ordered_json;

inline Json model_config_to_json(const ModelConfig& c) {
    Json j;
    j["input_size"] = c.input_size;
    j["input_frames"] = c.input_frames;
    j["predict_frames"] = c.predict_frames;
    j["encoder_channels"] = c.encoder_channels;
    j["decoder_channels"] = c.decoder_channels;
    j["n_s"] = c.n_s;
    j["n_d"] = c.n_d;
    j["convlstm_hidden"] = c.convlstm_hidden;
    j["convlstm_layers"] = c.convlstm_layers;
    j["phi_layers"] = c.phi_layers;
    j["phi_kernel"] = c.phi_kernel;
    j["residual_mode"] = to_string(c.residual_mode);
    j["core_mode"] = to_string(c.core_mode);
    j["image_residual"] = c.image_residual;
    j["output_nonlinearity"] = to_string(c.output_nonlinearity);
    j["dropout_rate"] = c.dropout_rate;
    return j;
}

inline ModelConfig model_config_from_json(const Json& j) {
    ModelConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        const Json& v = it.value();
        if (key == "input_size") c.input_size = v.get<std::int64_t>();
        else if (key == "input_frames") c.input_frames = v.get<std::int64_t>();
        else if (key == "predict_frames") c.predict_frames = v.get<std::int64_t>();
        else if (key == "encoder_channels") c.encoder_channels = v.get<std::vector<std::int64_t>>();
        else if (key == "decoder_channels") c.decoder_channels = v.get<std::vector<std::int64_t>>();
        else if (key == "n_s") c.n_s = v.get<std::int64_t>();
        else if (key == "n_d") c.n_d = v.get<std::int64_t>();
        else if (key == "convlstm_hidden") c.convlstm_hidden = v.get<std::int64_t>();
        else if (key == "convlstm_layers") c.convlstm_layers = v.get<int>();
        else if (key == "phi_layers") c.phi_layers = v.get<int>();
        else if (key == "phi_kernel") c.phi_kernel = v.get<int>();
        else if (key == "residual_mode") {
            const std::string s = v.get<std::string>();
            if (s == "full") c.residual_mode = ResidualMode::Full;
            else if (s == "skip_from_last_input") c.residual_mode = ResidualMode::SkipFromLastInput;
            else if (s == "none") c.residual_mode = ResidualMode::None;
            else throw ConfigError("unknown residual_mode: " + s);
        } else if (key == "core_mode") {
            const std::string s = v.get<std::string>();
            if (s == "transformational") c.core_mode = CoreMode::Transformational;
            else if (s == "convlstm_only") c.core_mode = CoreMode::ConvLstmOnly;
            else throw ConfigError("unknown core_mode: " + s);
        } else if (key == "image_residual") c.image_residual = v.get<bool>();
        else if (key == "output_nonlinearity") {
            const std::string s = v.get<std::string>();
            if (s == "sigmoid") c.output_nonlinearity = OutputNonlinearity::Sigmoid;
            else if (s == "tanh") c.output_nonlinearity = OutputNonlinearity::Tanh;
            else throw ConfigError("unknown output_nonlinearity: " + s);
        } else if (key == "dropout_rate") c.dropout_rate = v.get<double>();
        else throw ConfigError("unknown model config key: " + key);
    }
    return c;
}

inline Json optimizer_config_to_json(const OptimizerConfig& c) {
    Json j;
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["weight_decay"] = c.weight_decay;
    j["decay_factor"] = c.decay_factor;
    j["plateau_patience"] = c.plateau_patience;
    j["min_relative_improvement"] = c.min_relative_improvement;
    return j;
}

inline OptimizerConfig optimizer_config_from_json(const Json& j) {
    OptimizerConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (key == "learning_rate") c.learning_rate = it.value().get<double>();
        else if (key == "momentum") c.momentum = it.value().get<double>();
        else if (key == "weight_decay") c.weight_decay = it.value().get<double>();
        else if (key == "decay_factor") c.decay_factor = it.value().get<double>();
        else if (key == "plateau_patience") c.plateau_patience = it.value().get<int>();
        else if (key == "min_relative_improvement")
            c.min_relative_improvement = it.value().get<double>();
        else throw ConfigError("unknown optimizer config key: " + key);
    }
    return c;
}

inline Json train_config_to_json(const TrainConfig& c) {
    Json j;
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["validate_every"] = c.validate_every;
    j["val_sequences"] = c.val_sequences;
    j["log_every"] = c.log_every;
    j["target_metric"] = c.target_metric;
    return j;
}

inline TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (key == "steps") c.steps = it.value().get<std::int64_t>();
        else if (key == "batch_size") c.batch_size = it.value().get<std::int64_t>();
        else if (key == "validate_every") c.validate_every = it.value().get<std::int64_t>();
        else if (key == "val_sequences") c.val_sequences = it.value().get<std::int64_t>();
        else if (key == "log_every") c.log_every = it.value().get<std::int64_t>();
        else if (key == "target_metric") c.target_metric = it.value().get<double>();
        else throw ConfigError("unknown train config key: " + key);
    }
    return c;
}

inline Json generator_config_to_json(const GeneratorConfig& c) {
    Json j;
    j["canvas"] = c.canvas;
    j["frames"] = c.frames;
    j["sprites"] = c.sprites;
    j["speed_min"] = c.speed_min;
    j["speed_max"] = c.speed_max;
    return j;
}

inline GeneratorConfig generator_config_from_json(const Json& j) {
    GeneratorConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (key == "canvas") c.canvas = it.value().get<std::int64_t>();
        else if (key == "frames") c.frames = it.value().get<std::int64_t>();
        else if (key == "sprites") c.sprites = it.value().get<std::int64_t>();
        else if (key == "speed_min") c.speed_min = it.value().get<double>();
        else if (key == "speed_max") c.speed_max = it.value().get<double>();
        else throw ConfigError("unknown generator config key: " + key);
    }
    return c;
}

// Everything one run needs, as a single JSON document with sections
// "model", "optimizer", "train", "generator".
struct ConfigBundle {
    ModelConfig model;
    OptimizerConfig optimizer;
    TrainConfig train;
    GeneratorConfig generator;

    Json to_json() const {
        Json j;
        j["model"] = model_config_to_json(model);
        j["optimizer"] = optimizer_config_to_json(optimizer);
        j["train"] = train_config_to_json(train);
        j["generator"] = generator_config_to_json(generator);
        return j;
    }

    static ConfigBundle from_json(const Json& j) {
        ConfigBundle b;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            if (key == "model") b.model = model_config_from_json(it.value());
            else if (key == "optimizer") b.optimizer = optimizer_config_from_json(it.value());
            else if (key == "train") b.train = train_config_from_json(it.value());
            else if (key == "generator") b.generator = generator_config_from_json(it.value());
            else throw ConfigError("unknown config section: " + key);
        }
        return b;
    }
};

// Preset bundles: model preset plus the matching training constants.
inline ConfigBundle bundle_for_preset(const std::string& name) {
    ConfigBundle b;
    b.model = preset_by_name(name);
    if (name == "desk") {
        b.optimizer.learning_rate = 1.0;
        b.train.batch_size = 16;
    } else if (name == "mnist-paper") {
        b.optimizer.learning_rate = 10.0;
        b.train.batch_size = 50;
    } else if (name == "kth-paper") {
        b.optimizer.learning_rate = 1.0;
        b.train.batch_size = 20;
    } else if (name == "ucf-paper") {
        b.optimizer.learning_rate = 1.0;
        b.train.batch_size = 10;
    } else if (name == "mini") {
        b.optimizer.learning_rate = 0.5;
        b.train.batch_size = 4;
    }
    b.generator.canvas = b.model.input_size;
    b.generator.frames = b.model.input_frames + b.model.predict_frames;
    return b;
}

// Deep-merge `patch` over `base` (objects merge, scalars replace).
inline void merge_json(Json& base, const Json& patch) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
            merge_json(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

// "--set section.key=value" override; the value parses as JSON when
// possible, else as a string.
inline void apply_set_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw UsageError("--set expects key=value, got: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    Json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw UsageError("--set path has an empty segment: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

inline void apply_ablation(ModelConfig& cfg, const std::string& ablation) {
    if (ablation == "none") return;
    if (ablation == "no-core") {
        cfg.core_mode = CoreMode::ConvLstmOnly;
        cfg.convlstm_hidden = cfg.n_s;
    } else if (ablation == "skip-last-input") {
        cfg.residual_mode = ResidualMode::SkipFromLastInput;
    } else if (ablation == "no-residual") {
        cfg.residual_mode = ResidualMode::None;
    } else {
        throw UsageError("unknown ablation: " + ablation);
    }
}

}  // namespace tspred
