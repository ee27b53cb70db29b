// SPDX-License-Identifier: Apache-2.0
#include "tspred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tspred/config_json.hpp"
#include "tspred/nn_ops.hpp"

namespace tspred {

double psnr(const Tensor32& pred, const Tensor32& target, double data_range) {
    check_same_dims(pred, target, "psnr");
    if (data_range <= 0.0) throw std::domain_error("psnr data range must be positive");
    double mse = 0.0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(pred.numel());
    if (mse == 0.0) return kPsnrCap;
    return 10.0 * std::log10(data_range * data_range / mse);
}

namespace {

constexpr std::int64_t kSsimWindow = 7;

// One H x W plane pair; running row sums keep it O(H*W) per plane.
double ssim_plane(const float* a, const float* b, std::int64_t h, std::int64_t w, double c1,
                  double c2) {
    const std::int64_t win = kSsimWindow;
    const std::int64_t oh = h - win + 1, ow = w - win + 1;
    const double inv_n = 1.0 / static_cast<double>(win * win);
    double total = 0.0;
    std::vector<double> col_a(static_cast<std::size_t>(w)), col_b(col_a.size()),
        col_aa(col_a.size()), col_bb(col_a.size()), col_ab(col_a.size());
    for (std::int64_t y = 0; y < oh; ++y) {
        // column sums of the stripe [y, y+win)
        for (std::int64_t x = 0; x < w; ++x) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::int64_t dy = 0; dy < win; ++dy) {
                const double va = a[(y + dy) * w + x];
                const double vb = b[(y + dy) * w + x];
                sa += va;
                sb += vb;
                saa += va * va;
                sbb += vb * vb;
                sab += va * vb;
            }
            col_a[static_cast<std::size_t>(x)] = sa;
            col_b[static_cast<std::size_t>(x)] = sb;
            col_aa[static_cast<std::size_t>(x)] = saa;
            col_bb[static_cast<std::size_t>(x)] = sbb;
            col_ab[static_cast<std::size_t>(x)] = sab;
        }
        for (std::int64_t x = 0; x < ow; ++x) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::int64_t dx = 0; dx < win; ++dx) {
                sa += col_a[static_cast<std::size_t>(x + dx)];
                sb += col_b[static_cast<std::size_t>(x + dx)];
                saa += col_aa[static_cast<std::size_t>(x + dx)];
                sbb += col_bb[static_cast<std::size_t>(x + dx)];
                sab += col_ab[static_cast<std::size_t>(x + dx)];
            }
            const double mu_a = sa * inv_n, mu_b = sb * inv_n;
            const double var_a = saa * inv_n - mu_a * mu_a;
            const double var_b = sbb * inv_n - mu_b * mu_b;
            const double cov = sab * inv_n - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    }
    return total / static_cast<double>(oh * ow);
}

}  // namespace

double ssim(const Tensor32& pred, const Tensor32& target, double data_range) {
    check_same_dims(pred, target, "ssim");
    if (data_range <= 0.0) throw std::domain_error("ssim data range must be positive");
    if (pred.rank() < 2) throw ShapeError("ssim expects at least 2-d images");
    const std::int64_t w = pred.dim(pred.rank() - 1);
    const std::int64_t h = pred.dim(pred.rank() - 2);
    if (h < kSsimWindow || w < kSsimWindow)
        throw std::domain_error("ssim needs images of at least " + std::to_string(kSsimWindow) +
                                "x" + std::to_string(kSsimWindow));
    const std::int64_t planes = pred.numel() / (h * w);
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    double total = 0.0;
    for (std::int64_t p = 0; p < planes; ++p)
        total += ssim_plane(pred.data() + p * h * w, target.data() + p * h * w, h, w, c1, c2);
    return total / static_cast<double>(planes);
}

double bce_nats_per_frame(const Tensor32& pred, const Tensor32& target) {
    const double mean = bce_mean_forward(pred, target);
    const std::int64_t frame_pixels =
        pred.rank() == 4 ? pred.dim(1) * pred.dim(2) * pred.dim(3) : pred.numel();
    return mean * static_cast<double>(frame_pixels);
}

double MetricsReport::bce_avg() const {
    return bce.empty() ? 0.0 : std::accumulate(bce.begin(), bce.end(), 0.0) / bce.size();
}
double MetricsReport::bce_first() const { return bce.empty() ? 0.0 : bce.front(); }
double MetricsReport::psnr_avg() const {
    return psnr_db.empty() ? 0.0
                           : std::accumulate(psnr_db.begin(), psnr_db.end(), 0.0) / psnr_db.size();
}
double MetricsReport::psnr_first() const { return psnr_db.empty() ? 0.0 : psnr_db.front(); }
double MetricsReport::ssim_avg() const {
    return ssim_score.empty()
               ? 0.0
               : std::accumulate(ssim_score.begin(), ssim_score.end(), 0.0) / ssim_score.size();
}
double MetricsReport::ssim_first() const { return ssim_score.empty() ? 0.0 : ssim_score.front(); }

std::string MetricsReport::to_json() const {
    Json j;
    j["sequences"] = sequences;
    j["horizons"] = horizons;
    j["data_range"] = data_range;
    j["bce_avg"] = bce_avg();
    j["bce_first"] = bce_first();
    for (std::size_t k = 0; k < bce.size(); ++k)
        j["bce_frame_" + std::to_string(k + 1)] = bce[k];
    if (with_image_metrics) {
        j["psnr_avg"] = psnr_avg();
        j["psnr_first"] = psnr_first();
        j["ssim_avg"] = ssim_avg();
        j["ssim_first"] = ssim_first();
        for (std::size_t k = 0; k < psnr_db.size(); ++k)
            j["psnr_frame_" + std::to_string(k + 1)] = psnr_db[k];
        for (std::size_t k = 0; k < ssim_score.size(); ++k)
            j["ssim_frame_" + std::to_string(k + 1)] = ssim_score[k];
    }
    return j.dump(2);
}

MetricsReport evaluate_model(const PredictFn& pred_fn, const std::vector<SequenceRecord>& records,
                             std::int64_t input_frames, std::int64_t predict_frames, double lo,
                             double hi, bool with_image_metrics) {
    if (records.empty()) throw UsageError("evaluate_model needs at least one sequence");
    for (const auto& r : records)
        if (r.frames < input_frames + predict_frames)
            throw UsageError("record has " + std::to_string(r.frames) +
                             " frames, horizon needs " +
                             std::to_string(input_frames + predict_frames));

    struct Row {
        std::int64_t provenance;
        std::vector<double> bce, psnr_db, ssim_score;
    };
    std::vector<Row> rows(records.size());
    const double range = hi - lo;
    const bool bce_valid = lo >= 0.0;  // BCE needs [0,1] data

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        std::vector<const SequenceRecord*> one{&rec};
        std::vector<Tensor32> inputs, targets;
        for (std::int64_t t = 0; t < input_frames; ++t)
            inputs.push_back(frames_to_tensor(one, t, lo, hi));
        for (std::int64_t k = 0; k < predict_frames; ++k)
            targets.push_back(frames_to_tensor(one, input_frames + k, lo, hi));
        auto preds = pred_fn(inputs, static_cast<std::int64_t>(i));
        if (static_cast<std::int64_t>(preds.size()) != predict_frames)
            throw UsageError("prediction function returned " + std::to_string(preds.size()) +
                             " frames, expected " + std::to_string(predict_frames));
        Row& row = rows[i];
        row.provenance = rec.index;
        for (std::int64_t k = 0; k < predict_frames; ++k) {
            const auto& p = preds[static_cast<std::size_t>(k)];
            const auto& t = targets[static_cast<std::size_t>(k)];
            row.bce.push_back(bce_valid ? bce_nats_per_frame(p, t) : 0.0);
            if (with_image_metrics) {
                row.psnr_db.push_back(psnr(p, t, range));
                row.ssim_score.push_back(ssim(p, t, range));
            }
        }
    }

    // Fixed-order reduction keyed by provenance.
    std::vector<const Row*> ordered;
    ordered.reserve(rows.size());
    for (const auto& r : rows) ordered.push_back(&r);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Row* a, const Row* b) { return a->provenance < b->provenance; });

    MetricsReport rep;
    rep.sequences = static_cast<std::int64_t>(records.size());
    rep.horizons = predict_frames;
    rep.data_range = range;
    rep.with_image_metrics = with_image_metrics;
    rep.bce.assign(static_cast<std::size_t>(predict_frames), 0.0);
    if (with_image_metrics) {
        rep.psnr_db.assign(static_cast<std::size_t>(predict_frames), 0.0);
        rep.ssim_score.assign(static_cast<std::size_t>(predict_frames), 0.0);
    }
    for (const Row* r : ordered)
        for (std::int64_t k = 0; k < predict_frames; ++k) {
            rep.bce[static_cast<std::size_t>(k)] += r->bce[static_cast<std::size_t>(k)];
            if (with_image_metrics) {
                rep.psnr_db[static_cast<std::size_t>(k)] += r->psnr_db[static_cast<std::size_t>(k)];
                rep.ssim_score[static_cast<std::size_t>(k)] +=
                    r->ssim_score[static_cast<std::size_t>(k)];
            }
        }
    const double inv = 1.0 / static_cast<double>(records.size());
    for (auto& v : rep.bce) v *= inv;
    for (auto& v : rep.psnr_db) v *= inv;
    for (auto& v : rep.ssim_score) v *= inv;
    return rep;
}

PredictFn copy_last_frame_baseline(std::int64_t predict_frames) {
    return [predict_frames](const std::vector<Tensor32>& inputs, std::int64_t) {
        return std::vector<Tensor32>(static_cast<std::size_t>(predict_frames), inputs.back());
    };
}

}  // namespace tspred
