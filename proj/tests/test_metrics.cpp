// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include <json.hpp>

#include "oracles.hpp"
#include "tspred/metrics.hpp"

using namespace tspred;

TEST_CASE("psnr fixed values") {
    RngStream rng(3);
    auto a = Tensor32::uniform({1, 1, 16, 16}, 0, 1, rng);
    CHECK(psnr(a, a, 1.0) == doctest::Approx(kPsnrCap));

    // constant squared error of 0.01 on range-1 images
    auto b = a;
    for (std::int64_t i = 0; i < b.numel(); ++i) b[i] += 0.1f;
    CHECK(psnr(a, b, 1.0) == doctest::Approx(20.0).epsilon(1e-5));
}

TEST_CASE("psnr matches the direct formula") {
    RngStream rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto a = Tensor32::uniform({1, 1, 12, 12}, 0, 1, rng);
        auto b = Tensor32::uniform({1, 1, 12, 12}, 0, 1, rng);
        double mse = 0;
        for (std::int64_t i = 0; i < a.numel(); ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            mse += d * d;
        }
        mse /= a.numel();
        const double expect = 10.0 * std::log10(1.0 / mse);
        CHECK(std::fabs(psnr(a, b, 1.0) - expect) < 1e-9);
    }
}

TEST_CASE("psnr strictly decreases as noise grows") {
    RngStream rng(7);
    auto clean = Tensor32::uniform({1, 1, 32, 32}, 0.2f, 0.8f, rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
        auto noisy = clean;
        RngStream nr(11);
        for (std::int64_t i = 0; i < noisy.numel(); ++i)
            noisy[i] += static_cast<float>(nr.uniform(-amp, amp));
        const double p = psnr(noisy, clean, 1.0);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim fixed points") {
    RngStream rng(13);
    auto a = Tensor32::uniform({1, 1, 16, 16}, 0, 1, rng);
    CHECK(std::fabs(ssim(a, a, 1.0) - 1.0) < 1e-12);

    auto c = Tensor32::full({1, 1, 9, 9}, 0.42f);
    CHECK(std::fabs(ssim(c, c, 1.0) - 1.0) < 1e-12);

    Tensor32 small({1, 1, 6, 6});
    CHECK_THROWS_AS(ssim(small, small, 1.0), std::domain_error);
}

TEST_CASE("ssim matches an independent sliding-window implementation") {
    RngStream rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        auto a = Tensor32::uniform({1, 1, 16, 16}, 0, 1, rng);
        auto b = Tensor32::uniform({1, 1, 16, 16}, 0, 1, rng);
        const double mine = ssim(a, b, 1.0);
        const double ref = oracle::ssim_naive(a.data(), b.data(), 16, 16, 1.0);
        CHECK(std::fabs(mine - ref) < 1e-6);
    }
}

TEST_CASE("ssim is symmetric") {
    RngStream rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = Tensor32::uniform({1, 1, 14, 14}, 0, 1, rng);
        auto b = Tensor32::uniform({1, 1, 14, 14}, 0, 1, rng);
        CHECK(std::fabs(ssim(a, b, 1.0) - ssim(b, a, 1.0)) < 1e-12);
    }
}

namespace {

std::vector<SequenceRecord> small_dataset(int count) {
    GeneratorConfig cfg;
    cfg.canvas = 16;
    cfg.frames = 6;
    cfg.sprites = 1;
    cfg.speed_min = 1.0;
    cfg.speed_max = 2.0;
    cfg.seed = 23;
    Sprite s;
    s.h = s.w = 5;
    s.pix.assign(25, 200);
    return generate_many(cfg, {s}, 0, count);
}

}  // namespace

TEST_CASE("oracle predictor scores perfectly") {
    // binary frames: BCE of an exact prediction is zero only for 0/1 targets
    std::vector<SequenceRecord> records;
    for (int i = 0; i < 5; ++i) {
        SequenceRecord r;
        r.frames = 6;
        r.h = r.w = 16;
        r.index = i;
        r.pix.assign(6 * 16 * 16, 0);
        for (std::int64_t f = 0; f < 6; ++f)
            for (std::int64_t y = 2; y < 8; ++y)
                for (std::int64_t x = 0; x < 6; ++x)
                    r.pix[(f * 16 + y) * 16 + ((x + f + i) % 16)] = 255;
        records.push_back(std::move(r));
    }
    PredictFn oracle_fn = [&records](const std::vector<Tensor32>&, std::int64_t idx) {
        std::vector<const SequenceRecord*> one{&records[static_cast<std::size_t>(idx)]};
        std::vector<Tensor32> out;
        for (std::int64_t k = 0; k < 3; ++k)
            out.push_back(frames_to_tensor(one, 3 + k, 0.0, 1.0));
        return out;
    };
    auto rep = evaluate_model(oracle_fn, records, 3, 3, 0.0, 1.0, true);
    CHECK(rep.bce_avg() < 1e-3);  // exact targets, up to the clamp epsilon
    for (double s : rep.ssim_score) CHECK(std::fabs(s - 1.0) < 1e-9);
    for (double p : rep.psnr_db) CHECK(p == doctest::Approx(kPsnrCap));
}

TEST_CASE("copy-last baseline is finite and worse than the oracle") {
    auto records = small_dataset(6);
    auto rep = evaluate_model(copy_last_frame_baseline(3), records, 3, 3, 0.0, 1.0, false);
    CHECK(rep.bce_avg() > 0.0);
    CHECK(std::isfinite(rep.bce_avg()));
    CHECK(rep.horizons == 3);
}

TEST_CASE("report carries the averaged and first-frame views") {
    auto records = small_dataset(4);
    auto rep = evaluate_model(copy_last_frame_baseline(3), records, 3, 3, 0.0, 1.0, true);
    auto j = nlohmann::json::parse(rep.to_json());
    CHECK(j.contains("bce_avg"));
    CHECK(j.contains("bce_first"));
    CHECK(j.contains("psnr_avg"));
    CHECK(j.contains("ssim_first"));
    CHECK(j.contains("bce_frame_1"));
    CHECK(j.contains("bce_frame_3"));
    CHECK(j["sequences"].get<int>() == 4);
    // the averaged view is the mean of the per-horizon values
    double mean = (j["bce_frame_1"].get<double>() + j["bce_frame_2"].get<double>() +
                   j["bce_frame_3"].get<double>()) /
                  3.0;
    CHECK(j["bce_avg"].get<double>() == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("evaluation is order-independent") {
    auto records = small_dataset(8);
    auto shuffled = records;
    std::mt19937 gen(99);
    std::shuffle(shuffled.begin(), shuffled.end(), gen);

    auto make_fn = [](const std::vector<SequenceRecord>& recs) {
        return [&recs](const std::vector<Tensor32>& inputs, std::int64_t) {
            // mildly blurred copy-last stand-in, a deterministic function of
            // the inputs alone
            std::vector<Tensor32> out;
            for (int k = 0; k < 3; ++k) {
                Tensor32 f = inputs.back();
                for (std::int64_t i = 0; i < f.numel(); ++i)
                    f[i] = 0.5f + 0.9f * (f[i] - 0.5f);
                out.push_back(std::move(f));
            }
            (void)recs;
            return out;
        };
    };
    auto rep_a = evaluate_model(make_fn(records), records, 3, 3, 0.0, 1.0, true);
    auto rep_b = evaluate_model(make_fn(shuffled), shuffled, 3, 3, 0.0, 1.0, true);
    for (std::size_t k = 0; k < rep_a.bce.size(); ++k) {
        CHECK(std::fabs(rep_a.bce[k] - rep_b.bce[k]) < 1e-12);
        CHECK(std::fabs(rep_a.ssim_score[k] - rep_b.ssim_score[k]) < 1e-12);
    }
}

TEST_CASE("horizon beyond the data is a usage error") {
    auto records = small_dataset(2);
    CHECK_THROWS_AS(evaluate_model(copy_last_frame_baseline(5), records, 3, 5, 0.0, 1.0, false),
                    UsageError);
}
