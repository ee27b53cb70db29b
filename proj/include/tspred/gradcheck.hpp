// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tspred/model.hpp"

namespace tspred {

struct GradCheckReport {
    struct Group {
        std::string name;
        double worst_rel = 0.0;
        std::int64_t checked = 0;
    };
    std::vector<Group> groups;
    double worst_rel = 0.0;
    double tolerance = 1e-4;

    bool pass() const { return worst_rel < tolerance; }
};

// Central finite differences against the tape gradients, in double
// precision, for every parameter of the given configuration. The loss is a
// full train-mode rollout with the pixel loss the preset trains with.
// rel = |fd - analytic| / max(|fd|, |analytic|, floor)
// fd_step must stay small enough that leaky-relu kink crossings inside the
// central interval sit below the tolerance; 1e-6 holds at tol 1e-4.
// limit_per_group > 0 spot-checks only that many entries per tensor.
inline GradCheckReport run_gradcheck(const ModelConfig& cfg, std::uint64_t seed, double fd_step,
                                     std::int64_t batch, double tolerance,
                                     std::int64_t limit_per_group = 0) {
    cfg.validate();
    Network64 net = Network64::build(cfg, seed);
    RngStream rng = RngStream::keyed(seed, 0xF0);
    std::vector<Tensor64> inputs, targets;
    for (std::int64_t t = 0; t < cfg.input_frames; ++t)
        inputs.push_back(TensorT<double>::uniform(
            {batch, cfg.image_channels(), cfg.input_size, cfg.input_size}, 0.02, 0.98, rng));
    for (std::int64_t k = 0; k < cfg.predict_frames; ++k)
        targets.push_back(TensorT<double>::uniform(
            {batch, cfg.image_channels(), cfg.input_size, cfg.input_size}, 0.02, 0.98, rng));

    const bool bce = cfg.output_nonlinearity == OutputNonlinearity::Sigmoid;
    auto loss_value = [&](Network64& m, std::vector<Tensor64>* grads) -> double {
        Graph<double> g;
        auto st = m.stage(g);
        std::vector<int> ids;
        for (const auto& f : inputs) ids.push_back(g.leaf(f));
        auto fo = m.predict_on_graph(g, st, ids, cfg.predict_frames, true, nullptr);
        int total = -1;
        for (std::size_t k = 0; k < targets.size(); ++k) {
            int l = bce ? g.bce_loss(fo.preds[k], targets[k]) : g.mse_loss(fo.preds[k], targets[k]);
            total = total < 0 ? l : g.add(total, l);
        }
        total = g.scale(total, 1.0 / static_cast<double>(targets.size()));
        const double v = g.value(total)[0];
        if (grads) {
            g.backward(total, false);
            grads->clear();
            for (std::size_t i = 0; i < m.params.size(); ++i)
                grads->push_back(g.grad(st.at(static_cast<int>(i))));
        }
        return v;
    };

    std::vector<Tensor64> analytic;
    loss_value(net, &analytic);

    GradCheckReport report;
    report.tolerance = tolerance;
    const double floor = 1e-3;
    for (std::size_t p = 0; p < net.params.size(); ++p) {
        GradCheckReport::Group group;
        group.name = net.params[p].name;
        auto& theta = net.params[p].value;
        const std::int64_t todo =
            limit_per_group > 0 ? std::min(limit_per_group, theta.numel()) : theta.numel();
        for (std::int64_t j = 0; j < todo; ++j) {
            const double saved = theta[j];
            const double an = analytic[p][j];
            auto rel_at = [&](double h) {
                theta[j] = saved + h;
                const double up = loss_value(net, nullptr);
                theta[j] = saved - h;
                const double down = loss_value(net, nullptr);
                theta[j] = saved;
                const double fd = (up - down) / (2.0 * h);
                return std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), floor});
            };
            // A leaky-relu kink inside the central interval inflates the
            // difference by O(h); refining the step collapses that artifact
            // while a genuine gradient error stays put.
            double rel = rel_at(fd_step);
            for (double h = fd_step / 10.0; rel >= tolerance && h >= fd_step / 100.0; h /= 10.0)
                rel = std::min(rel, rel_at(h));
            group.worst_rel = std::max(group.worst_rel, rel);
            ++group.checked;
        }
        report.worst_rel = std::max(report.worst_rel, group.worst_rel);
        report.groups.push_back(std::move(group));
    }
    return report;
}

}  // namespace tspred
