// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tspred/rng.hpp"
#include "tspred/tensor.hpp"

namespace tspred {

struct Sprite {
    std::int64_t h = 0, w = 0;
    std::vector<std::uint8_t> pix;  // row-major, 8-bit intensity
};

// Four deterministic rasterized shapes at 20x20, so the generator works with
// no external files.
std::vector<Sprite> builtin_shapes();

// Big-endian IDX image container (magic 0x00000803).
std::vector<Sprite> load_sprites_idx(const std::string& path);

struct GeneratorConfig {
    std::int64_t canvas = 64;
    std::int64_t frames = 20;
    std::int64_t sprites = 2;
    double speed_min = 2.0;  // pixels per frame
    double speed_max = 5.0;
    std::uint64_t seed = 0;
};

struct SequenceRecord {
    std::int64_t frames = 0, h = 0, w = 0;
    std::vector<std::uint8_t> pix;  // frames*h*w
    std::uint64_t seed = 0;         // provenance
    std::int64_t index = 0;

    std::uint8_t at(std::int64_t f, std::int64_t y, std::int64_t x) const {
        return pix[static_cast<std::size_t>((f * h + y) * w + x)];
    }
};

// One-dimensional elastic reflection on [0, limit]; used per axis.
double reflect_position(double x, double& v, double limit);

// Byte-deterministic given (config.seed, index): sprites get uniform random
// sub-pixel start positions and velocities (speed from the range, direction
// uniform on the circle), integrate per frame, reflect at the borders, and
// composite by per-pixel maximum with bilinear sub-pixel placement.
SequenceRecord generate_sequence(const GeneratorConfig& cfg, const std::vector<Sprite>& sprites,
                                 std::int64_t index);

std::vector<SequenceRecord> generate_many(const GeneratorConfig& cfg,
                                          const std::vector<Sprite>& sprites, std::int64_t first,
                                          std::int64_t count);

// Container: magic "SEQ0", u32-LE version=1, u32-LE count, u16-LE frames,
// u16-LE H, u16-LE W, u8 channels, then raw frame bytes per sequence.
void write_dataset(const std::vector<SequenceRecord>& records, const std::string& path);
std::vector<SequenceRecord> read_dataset(const std::string& path);

struct Batch {
    std::vector<Tensor32> inputs;   // T tensors of [B,1,H,W]
    std::vector<Tensor32> targets;  // K tensors of [B,1,H,W]
    std::vector<std::int64_t> record_indices;
};

// Scales bytes into [lo, hi] (the model's declared pixel range).
Tensor32 frames_to_tensor(const std::vector<const SequenceRecord*>& recs, std::int64_t frame,
                          double lo, double hi);

// Shuffled fixed-dataset batches; the permutation is a pure function of
// (seed, epoch). Partial trailing batches are dropped.
class BatchStream {
public:
    BatchStream(const std::vector<SequenceRecord>* records, std::int64_t input_frames,
                std::int64_t target_frames, std::int64_t batch_size, double lo, double hi,
                std::uint64_t seed);
    Batch next();
    std::int64_t epoch() const { return epoch_; }

private:
    void reshuffle();
    const std::vector<SequenceRecord>* records_;
    std::int64_t t_, k_, batch_, cursor_ = 0, epoch_ = -1;
    double lo_, hi_;
    std::uint64_t seed_;
    std::vector<std::int64_t> order_;
};

}  // namespace tspred
