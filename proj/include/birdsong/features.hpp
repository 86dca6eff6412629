#pragma once

#include <array>
#include <string>
#include <vector>

#include "birdsong/audio.hpp"
#include "birdsong/core.hpp"
#include "birdsong/dsp.hpp"

namespace birdsong {

constexpr std::size_t kNumMfcc = 15;
constexpr std::size_t kFeatureDim = 16;

/// The numeric clip descriptor: indices 0..14 are per-clip means of MFCC
/// coefficients 1..15, index 15 is the mean zero-crossing rate.
struct FeatureVector {
    std::array<double, kFeatureDim> values{};

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

inline FeatureVector feature_vector(const AudioBuffer& buffer, const SpectrogramParams& params,
                                    bool include_c0 = false) {
    if (buffer.samples.size() < params.n_fft)
        throw TooShort("feature_vector needs at least n_fft samples");

    const Matrix coeffs = mfcc(buffer, kNumMfcc, params, include_c0);
    FeatureVector fv;
    for (std::size_t r = 0; r < kNumMfcc; ++r) {
        double sum = 0.0;
        for (std::size_t t = 0; t < coeffs.cols; ++t) sum += coeffs(r, t);
        fv[r] = sum / static_cast<double>(coeffs.cols);
    }
    fv[kNumMfcc] = mean(zcr(buffer, params.n_fft, params.hop));
    return fv;
}

}  // namespace birdsong
