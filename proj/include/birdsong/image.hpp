#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "birdsong/core.hpp"
#include "birdsong/dsp.hpp"

namespace birdsong {

constexpr std::size_t kImageSize = 64;

/// Fixed 64x64 grayscale raster of a clip's mel spectrogram, values in [0,1].
/// Row 0 is the top of the image; low frequencies sit on the bottom row.
struct ClipImage {
    Matrix pixels;         // [64 x 64]
    std::string clip_id;   // source clip reference

    ClipImage() : pixels(kImageSize, kImageSize, 0.0) {}
};

namespace detail {

/// Bilinear resize with half-pixel centers. Weights are nonnegative, so the
/// mapping is monotone in every input entry.
inline Matrix bilinear_resize(const Matrix& in, std::size_t out_rows, std::size_t out_cols) {
    Matrix out(out_rows, out_cols, 0.0);
    if (in.rows == 0 || in.cols == 0) return out;
    const double row_scale = static_cast<double>(in.rows) / static_cast<double>(out_rows);
    const double col_scale = static_cast<double>(in.cols) / static_cast<double>(out_cols);
    for (std::size_t r = 0; r < out_rows; ++r) {
        double src_r = (static_cast<double>(r) + 0.5) * row_scale - 0.5;
        src_r = std::clamp(src_r, 0.0, static_cast<double>(in.rows - 1));
        const auto r0 = static_cast<std::size_t>(src_r);
        const std::size_t r1 = std::min(r0 + 1, in.rows - 1);
        const double fr = src_r - static_cast<double>(r0);
        for (std::size_t c = 0; c < out_cols; ++c) {
            double src_c = (static_cast<double>(c) + 0.5) * col_scale - 0.5;
            src_c = std::clamp(src_c, 0.0, static_cast<double>(in.cols - 1));
            const auto c0 = static_cast<std::size_t>(src_c);
            const std::size_t c1 = std::min(c0 + 1, in.cols - 1);
            const double fc = src_c - static_cast<double>(c0);
            out(r, c) = in(r0, c0) * (1.0 - fr) * (1.0 - fc) + in(r0, c1) * (1.0 - fr) * fc +
                        in(r1, c0) * fr * (1.0 - fc) + in(r1, c1) * fr * fc;
        }
    }
    return out;
}

}  // namespace detail

/// Rasterize a mel spectrogram: dB scale, [-80, 0] dB mapped to [0, 1],
/// bilinear-resized to 64x64 with time on the x axis and low frequencies at
/// the bottom row.
inline ClipImage render_image(const MelSpectrogram& spec) {
    if (spec.power.empty()) throw EmptySignal("render_image of empty spectrogram");
    const Matrix db = log_amplitude(spec.power);

    Matrix scaled(db.rows, db.cols, 0.0);
    for (std::size_t i = 0; i < db.data.size(); ++i)
        scaled.data[i] = std::clamp((db.data[i] + 80.0) / 80.0, 0.0, 1.0);

    const Matrix resized = detail::bilinear_resize(scaled, kImageSize, kImageSize);
    ClipImage img;
    for (std::size_t r = 0; r < kImageSize; ++r)
        for (std::size_t c = 0; c < kImageSize; ++c)
            img.pixels(kImageSize - 1 - r, c) = resized(r, c);  // flip: band 0 -> bottom
    return img;
}

inline double pixel_stddev(const ClipImage& img) {
    const auto& v = img.pixels.data;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

/// Drop low-contrast images (the "strangely coloured" near-constant rasters
/// that carry no trainable features).
inline std::vector<ClipImage> filter_low_feature(const std::vector<ClipImage>& images,
                                                 double min_std = 0.02) {
    std::vector<ClipImage> kept;
    kept.reserve(images.size());
    for (const auto& img : images)
        if (pixel_stddev(img) >= min_std) kept.push_back(img);
    return kept;
}

/// 8-bit binary PGM (P5) export for inspection.
inline void save_pgm(const std::filesystem::path& path, const ClipImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "P5\n" << kImageSize << " " << kImageSize << "\n255\n";
    for (std::size_t r = 0; r < kImageSize; ++r)
        for (std::size_t c = 0; c < kImageSize; ++c) {
            const double v = std::clamp(img.pixels(r, c), 0.0, 1.0);
            out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
        }
}

inline ClipImage load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::string magic;
    std::size_t w = 0, h = 0;
    int maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || w != kImageSize || h != kImageSize || maxval != 255)
        throw ParseError("not a 64x64 8-bit PGM: " + path.string());
    in.get();  // single whitespace after header
    ClipImage img;
    for (std::size_t r = 0; r < kImageSize; ++r)
        for (std::size_t c = 0; c < kImageSize; ++c) {
            const int byte = in.get();
            if (byte == EOF) throw ParseError("truncated PGM: " + path.string());
            img.pixels(r, c) = static_cast<double>(byte) / 255.0;
        }
    return img;
}

}  // namespace birdsong
