// SPDX-License-Identifier: Apache-2.0
#include "tspred/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tspred/errors.hpp"
#include "tspred/parallel.hpp"
#include "tspred/serialize.hpp"

namespace tspred {

namespace {

Sprite filled(std::int64_t h, std::int64_t w) {
    Sprite s;
    s.h = h;
    s.w = w;
    s.pix.assign(static_cast<std::size_t>(h * w), 0);
    return s;
}

}  // namespace

namespace {

// Coverage-sampled rasterization (4x4 subsamples) gives the shapes the same
// soft single-pixel edge scanned digits have; hard binary edges would make
// the nonzero support pulse with the sub-pixel phase during motion.
template <class Inside>
Sprite rasterize(std::int64_t n, Inside inside) {
    Sprite s = filled(n, n);
    for (std::int64_t y = 0; y < n; ++y)
        for (std::int64_t x = 0; x < n; ++x) {
            int hit = 0;
            for (int sy = 0; sy < 4; ++sy)
                for (int sx = 0; sx < 4; ++sx)
                    if (inside(static_cast<double>(x) + (sx + 0.5) / 4.0,
                               static_cast<double>(y) + (sy + 0.5) / 4.0))
                        ++hit;
            s.pix[static_cast<std::size_t>(y * n + x)] =
                static_cast<std::uint8_t>((hit * 255 + 8) / 16);
        }
    return s;
}

}  // namespace

std::vector<Sprite> builtin_shapes() {
    const std::int64_t n = 20;
    const double c = n / 2.0;
    std::vector<Sprite> out;
    out.push_back(rasterize(n, [c](double x, double y) {
        return (x - c) * (x - c) + (y - c) * (y - c) <= 8.0 * 8.0;
    }));
    out.push_back(rasterize(n, [](double x, double y) {
        return x >= 3.5 && x <= 16.5 && y >= 3.5 && y <= 16.5;
    }));
    out.push_back(rasterize(n, [](double x, double y) {
        return (x >= 7.0 && x <= 13.0 && y >= 2.0 && y <= 18.0) ||
               (y >= 7.0 && y <= 13.0 && x >= 2.0 && x <= 18.0);
    }));
    out.push_back(rasterize(n, [](double x, double y) {
        if (y < 2.5 || y > 17.5) return false;
        const double half = (y - 2.5) * 8.0 / 15.0;
        return std::fabs(x - 10.0) <= half;
    }));
    return out;
}

std::vector<Sprite> load_sprites_idx(const std::string& path) {
    auto f = open_input(path);
    LeReader r{f, 0, path};
    std::uint8_t m[4];
    r.raw(m, 4);
    const std::uint32_t magic = (static_cast<std::uint32_t>(m[0]) << 24) |
                                (static_cast<std::uint32_t>(m[1]) << 16) |
                                (static_cast<std::uint32_t>(m[2]) << 8) | m[3];
    if (magic != 0x00000803u)
        throw FormatError(path + ": bad IDX magic at offset 0 (expected 0x00000803)");
    auto be32 = [&r]() {
        std::uint8_t b[4];
        r.raw(b, 4);
        return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
               (static_cast<std::uint32_t>(b[2]) << 8) | b[3];
    };
    const std::uint32_t count = be32();
    const std::uint32_t rows = be32();
    const std::uint32_t cols = be32();
    if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
        throw FormatError(path + ": implausible sprite extents " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    std::vector<Sprite> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Sprite s = filled(rows, cols);
        r.raw(s.pix.data(), s.pix.size());
        out.push_back(std::move(s));
    }
    return out;
}

double reflect_position(double x, double& v, double limit) {
    if (limit <= 0.0) {
        v = -v;
        return 0.0;
    }
    while (x < 0.0 || x > limit) {
        if (x < 0.0) {
            x = -x;
            v = -v;
        } else {
            x = 2.0 * limit - x;
            v = -v;
        }
    }
    return x;
}

namespace {

double bilinear(const Sprite& s, double y, double x) {
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    auto at = [&s](std::int64_t yy, std::int64_t xx) -> double {
        if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) return 0.0;
        return static_cast<double>(s.pix[static_cast<std::size_t>(yy * s.w + xx)]);
    };
    return at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x0 + 1) * (1 - fy) * fx +
           at(y0 + 1, x0) * fy * (1 - fx) + at(y0 + 1, x0 + 1) * fy * fx;
}

struct MovingSprite {
    const Sprite* sprite;
    double x, y, vx, vy;
};

}  // namespace

namespace {

void validate_generator(const GeneratorConfig& cfg, const std::vector<Sprite>& sprites) {
    if (sprites.empty()) throw ConfigError("empty sprite set");
    if (cfg.speed_min < 0 || cfg.speed_max < cfg.speed_min)
        throw ConfigError("invalid speed range");
    if (cfg.frames < 1 || cfg.canvas < 1 || cfg.sprites < 1)
        throw ConfigError("frames, canvas and sprite count must be positive");
    for (const auto& s : sprites)
        if (s.h > cfg.canvas || s.w > cfg.canvas)
            throw ConfigError("sprite " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                              " does not fit canvas " + std::to_string(cfg.canvas));
}

}  // namespace

SequenceRecord generate_sequence(const GeneratorConfig& cfg, const std::vector<Sprite>& sprites,
                                 std::int64_t index) {
    validate_generator(cfg, sprites);

    RngStream rng = RngStream::keyed(cfg.seed, static_cast<std::uint64_t>(index));
    std::vector<MovingSprite> movers;
    movers.reserve(static_cast<std::size_t>(cfg.sprites));
    for (std::int64_t i = 0; i < cfg.sprites; ++i) {
        MovingSprite m;
        m.sprite = &sprites[rng.next_below(sprites.size())];
        m.x = rng.uniform(0.0, static_cast<double>(cfg.canvas - m.sprite->w));
        m.y = rng.uniform(0.0, static_cast<double>(cfg.canvas - m.sprite->h));
        const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
        const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        m.vx = speed * std::cos(angle);
        m.vy = speed * std::sin(angle);
        movers.push_back(m);
    }

    SequenceRecord rec;
    rec.frames = cfg.frames;
    rec.h = rec.w = cfg.canvas;
    rec.seed = cfg.seed;
    rec.index = index;
    rec.pix.assign(static_cast<std::size_t>(cfg.frames * cfg.canvas * cfg.canvas), 0);

    std::vector<double> frame(static_cast<std::size_t>(cfg.canvas * cfg.canvas));
    for (std::int64_t f = 0; f < cfg.frames; ++f) {
        std::fill(frame.begin(), frame.end(), 0.0);
        for (const auto& m : movers) {
            const std::int64_t y0 = static_cast<std::int64_t>(std::floor(m.y));
            const std::int64_t x0 = static_cast<std::int64_t>(std::floor(m.x));
            for (std::int64_t py = std::max<std::int64_t>(0, y0);
                 py <= std::min(cfg.canvas - 1, y0 + m.sprite->h); ++py)
                for (std::int64_t px = std::max<std::int64_t>(0, x0);
                     px <= std::min(cfg.canvas - 1, x0 + m.sprite->w); ++px) {
                    const double v = bilinear(*m.sprite, py - m.y, px - m.x);
                    double& dst = frame[static_cast<std::size_t>(py * cfg.canvas + px)];
                    dst = std::max(dst, v);  // overlap compositing by maximum
                }
        }
        std::uint8_t* dst = rec.pix.data() + f * cfg.canvas * cfg.canvas;
        for (std::size_t i = 0; i < frame.size(); ++i)
            dst[i] = static_cast<std::uint8_t>(
                std::min(255.0, std::max(0.0, std::floor(frame[i] + 0.5))));
        for (auto& m : movers) {
            m.x = reflect_position(m.x + m.vx, m.vx, static_cast<double>(cfg.canvas - m.sprite->w));
            m.y = reflect_position(m.y + m.vy, m.vy, static_cast<double>(cfg.canvas - m.sprite->h));
        }
    }
    return rec;
}

std::vector<SequenceRecord> generate_many(const GeneratorConfig& cfg,
                                          const std::vector<Sprite>& sprites, std::int64_t first,
                                          std::int64_t count) {
    validate_generator(cfg, sprites);
    std::vector<SequenceRecord> out(static_cast<std::size_t>(count));
    parallel_ranges(0, count, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i)
            out[static_cast<std::size_t>(i)] = generate_sequence(cfg, sprites, first + i);
    });
    return out;
}

void write_dataset(const std::vector<SequenceRecord>& records, const std::string& path) {
    if (records.empty()) throw UsageError("refusing to write an empty dataset");
    const auto& r0 = records.front();
    for (const auto& r : records)
        if (r.frames != r0.frames || r.h != r0.h || r.w != r0.w)
            throw UsageError("all sequences in one dataset must share extents");
    auto f = open_output(path);
    LeWriter w{f};
    w.bytes("SEQ0");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(records.size()));
    w.u16(static_cast<std::uint16_t>(r0.frames));
    w.u16(static_cast<std::uint16_t>(r0.h));
    w.u16(static_cast<std::uint16_t>(r0.w));
    w.u8(1);
    for (const auto& r : records) w.raw(r.pix.data(), r.pix.size());
    if (!f) throw FormatError("write failed for " + path);
}

std::vector<SequenceRecord> read_dataset(const std::string& path) {
    auto f = open_input(path);
    LeReader r{f, 0, path};
    const std::string magic = r.bytes(4);
    if (magic != "SEQ0")
        throw FormatError(path + ": bad magic at offset 0 (expected \"SEQ0\")");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    const std::uint16_t frames = r.u16();
    const std::uint16_t h = r.u16();
    const std::uint16_t w = r.u16();
    const std::uint8_t channels = r.u8();
    if (channels != 1)
        throw FormatError(path + ": unsupported channel count " + std::to_string(channels));
    std::vector<SequenceRecord> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        SequenceRecord rec;
        rec.frames = frames;
        rec.h = h;
        rec.w = w;
        rec.index = static_cast<std::int64_t>(i);
        rec.pix.resize(static_cast<std::size_t>(frames) * h * w);
        r.raw(rec.pix.data(), rec.pix.size());
        out.push_back(std::move(rec));
    }
    return out;
}

Tensor32 frames_to_tensor(const std::vector<const SequenceRecord*>& recs, std::int64_t frame,
                          double lo, double hi) {
    const std::int64_t B = static_cast<std::int64_t>(recs.size());
    const std::int64_t h = recs.front()->h, w = recs.front()->w;
    Tensor32 t({B, 1, h, w});
    const double scale = (hi - lo) / 255.0;
    for (std::int64_t b = 0; b < B; ++b) {
        const std::uint8_t* src = recs[static_cast<std::size_t>(b)]->pix.data() + frame * h * w;
        float* dst = t.data() + b * h * w;
        for (std::int64_t i = 0; i < h * w; ++i)
            dst[i] = static_cast<float>(lo + scale * src[i]);
    }
    return t;
}

BatchStream::BatchStream(const std::vector<SequenceRecord>* records, std::int64_t input_frames,
                         std::int64_t target_frames, std::int64_t batch_size, double lo, double hi,
                         std::uint64_t seed)
    : records_(records), t_(input_frames), k_(target_frames), batch_(batch_size), lo_(lo),
      hi_(hi), seed_(seed) {
    if (batch_ > static_cast<std::int64_t>(records_->size()))
        throw UsageError("batch size " + std::to_string(batch_) + " exceeds dataset of " +
                         std::to_string(records_->size()));
    for (const auto& r : *records_)
        if (r.frames < t_ + k_)
            throw UsageError("record has " + std::to_string(r.frames) + " frames, need " +
                             std::to_string(t_ + k_));
    reshuffle();
}

void BatchStream::reshuffle() {
    ++epoch_;
    order_.resize(records_->size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int64_t>(i);
    RngStream rng = RngStream::keyed(seed_, static_cast<std::uint64_t>(epoch_) ^ 0x5851f42d4c957f2dull);
    for (std::size_t i = order_.size(); i > 1; --i)
        std::swap(order_[i - 1], order_[rng.next_below(i)]);
    cursor_ = 0;
}

Batch BatchStream::next() {
    if (cursor_ + batch_ > static_cast<std::int64_t>(order_.size())) reshuffle();
    Batch b;
    std::vector<const SequenceRecord*> recs;
    recs.reserve(static_cast<std::size_t>(batch_));
    for (std::int64_t i = 0; i < batch_; ++i) {
        const std::int64_t idx = order_[static_cast<std::size_t>(cursor_ + i)];
        recs.push_back(&(*records_)[static_cast<std::size_t>(idx)]);
        b.record_indices.push_back(idx);
    }
    cursor_ += batch_;
    for (std::int64_t t = 0; t < t_; ++t) b.inputs.push_back(frames_to_tensor(recs, t, lo_, hi_));
    for (std::int64_t k = 0; k < k_; ++k)
        b.targets.push_back(frames_to_tensor(recs, t_ + k, lo_, hi_));
    return b;
}

}  // namespace tspred
