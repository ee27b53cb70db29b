// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tspred/data.hpp"
#include "tspred/tensor.hpp"

namespace tspred {

inline constexpr double kPsnrCap = 100.0;  // returned when MSE is exactly zero

// 10*log10(range^2 / MSE) in decibels.
double psnr(const Tensor32& pred, const Tensor32& target, double data_range);

// Uniform 7x7 window, valid-window sliding (no padding), standard constants
// C1=(0.01*L)^2, C2=(0.03*L)^2. Inputs are N x C x H x W or H x W alike; all
// leading axes are treated as independent planes and averaged.
double ssim(const Tensor32& pred, const Tensor32& target, double data_range);

// Binary cross entropy summed over the pixels of one frame, averaged over
// all frames in the tensors (natural log).
double bce_nats_per_frame(const Tensor32& pred, const Tensor32& target);

struct MetricsReport {
    std::int64_t sequences = 0;
    std::int64_t horizons = 0;
    double data_range = 1.0;
    std::vector<double> bce, psnr_db, ssim_score;  // per horizon k=1..K
    bool with_image_metrics = false;

    double bce_avg() const;
    double bce_first() const;
    double psnr_avg() const;
    double psnr_first() const;
    double ssim_avg() const;
    double ssim_first() const;

    // Flat UTF-8 JSON object of named numeric fields.
    std::string to_json() const;
};

// pred_fn(inputs, sequence_index) -> K predicted frames, each [1,1,H,W].
using PredictFn =
    std::function<std::vector<Tensor32>(const std::vector<Tensor32>&, std::int64_t)>;

// Rolls every record through pred_fn and aggregates per-horizon metrics.
// Accumulation is reduced in record provenance order, so shuffling the
// dataset does not change any reported value.
MetricsReport evaluate_model(const PredictFn& pred_fn, const std::vector<SequenceRecord>& records,
                             std::int64_t input_frames, std::int64_t predict_frames, double lo,
                             double hi, bool with_image_metrics);

// The copy-last-input-frame baseline as a PredictFn.
PredictFn copy_last_frame_baseline(std::int64_t predict_frames);

}  // namespace tspred
