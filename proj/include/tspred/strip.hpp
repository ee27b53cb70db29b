// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tspred/tensor.hpp"

namespace tspred {

struct GrayImage {
    std::int64_t h = 0, w = 0;
    std::vector<std::uint8_t> pix;
};

// Binary PGM, "P5\n<w> <h>\n255\n" + raw bytes.
void write_pgm(const GrayImage& img, const std::string& path);
GrayImage read_pgm(const std::string& path);

// Frames tiled left-to-right with a 2-px separator, rows stacked with the
// same separator. Rows may have different lengths; short rows pad with
// black. Frames must share extents.
GrayImage render_strip(const std::vector<std::vector<GrayImage>>& rows);

// [N,1,H,W] or [1,1,H,W] tensor in [lo,hi] to 8-bit frames.
GrayImage tensor_to_gray(const Tensor32& t, std::int64_t batch_index, double lo, double hi);

}  // namespace tspred
