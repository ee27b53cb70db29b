// SPDX-License-Identifier: Apache-2.0
#include "tspred/strip.hpp"

#include <algorithm>
#include <cmath>

#include "tspred/errors.hpp"
#include "tspred/serialize.hpp"

namespace tspred {

namespace {
constexpr std::int64_t kSeparator = 2;
constexpr std::uint8_t kSeparatorGray = 128;
}  // namespace

void write_pgm(const GrayImage& img, const std::string& path) {
    auto f = open_output(path);
    f << "P5\n" << img.w << " " << img.h << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pix.data()),
            static_cast<std::streamsize>(img.pix.size()));
    if (!f) throw FormatError("write failed for " + path);
}

GrayImage read_pgm(const std::string& path) {
    auto f = open_input(path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw FormatError(path + ": expected binary PGM magic P5");
    std::int64_t w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w <= 0 || h <= 0 || maxval != 255)
        throw FormatError(path + ": unsupported PGM header");
    f.get();  // the single whitespace after maxval
    GrayImage img;
    img.w = w;
    img.h = h;
    img.pix.resize(static_cast<std::size_t>(w * h));
    f.read(reinterpret_cast<char*>(img.pix.data()), static_cast<std::streamsize>(img.pix.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.pix.size()))
        throw FormatError(path + ": truncated PGM payload");
    return img;
}

GrayImage render_strip(const std::vector<std::vector<GrayImage>>& rows) {
    if (rows.empty()) throw UsageError("render_strip needs at least one row");
    std::int64_t fh = -1, fw = -1, max_frames = 0;
    for (const auto& row : rows)
        for (const auto& f : row) {
            if (fh < 0) {
                fh = f.h;
                fw = f.w;
            }
            if (f.h != fh || f.w != fw) throw UsageError("strip frames must share extents");
            max_frames = std::max<std::int64_t>(max_frames,
                                                static_cast<std::int64_t>(row.size()));
        }
    if (fh < 0) throw UsageError("render_strip needs at least one frame");

    const std::int64_t nrows = static_cast<std::int64_t>(rows.size());
    GrayImage out;
    out.h = nrows * fh + (nrows - 1) * kSeparator;
    out.w = max_frames * fw + (max_frames - 1) * kSeparator;
    out.pix.assign(static_cast<std::size_t>(out.h * out.w), kSeparatorGray);

    for (std::int64_t r = 0; r < nrows; ++r) {
        const std::int64_t y0 = r * (fh + kSeparator);
        // blank padding for rows shorter than the widest
        for (std::int64_t y = 0; y < fh; ++y)
            std::fill_n(out.pix.begin() + (y0 + y) * out.w, out.w, std::uint8_t(0));
        for (std::size_t c = 0; c < rows[static_cast<std::size_t>(r)].size(); ++c) {
            const auto& f = rows[static_cast<std::size_t>(r)][c];
            const std::int64_t x0 = static_cast<std::int64_t>(c) * (fw + kSeparator);
            for (std::int64_t y = 0; y < fh; ++y)
                std::copy_n(f.pix.begin() + y * fw, fw,
                            out.pix.begin() + (y0 + y) * out.w + x0);
            if (static_cast<std::int64_t>(c) + 1 < max_frames)
                for (std::int64_t y = 0; y < fh; ++y)
                    std::fill_n(out.pix.begin() + (y0 + y) * out.w + x0 + fw, kSeparator,
                                kSeparatorGray);
        }
        if (r + 1 < nrows)
            for (std::int64_t y = 0; y < kSeparator; ++y)
                std::fill_n(out.pix.begin() + (y0 + fh + y) * out.w, out.w, kSeparatorGray);
    }
    return out;
}

GrayImage tensor_to_gray(const Tensor32& t, std::int64_t batch_index, double lo, double hi) {
    if (t.rank() != 4 || t.dim(1) != 1) throw ShapeError("tensor_to_gray expects Nx1xHxW");
    GrayImage img;
    img.h = t.dim(2);
    img.w = t.dim(3);
    img.pix.resize(static_cast<std::size_t>(img.h * img.w));
    const float* src = t.data() + batch_index * img.h * img.w;
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < img.pix.size(); ++i) {
        const double v = (static_cast<double>(src[i]) - lo) * scale;
        img.pix[i] = static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::floor(v + 0.5))));
    }
    return img;
}

}  // namespace tspred
