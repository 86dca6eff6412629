#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "birdsong/audio.hpp"
#include "birdsong/core.hpp"
#include "birdsong/dsp.hpp"

namespace birdsong {

namespace detail {

struct Biquad {
    double b0, b1, b2, a1, a2;

    std::vector<double> run(const std::vector<double>& x) const {
        std::vector<double> y(x.size());
        double z1 = 0.0, z2 = 0.0;  // direct form II transposed
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double in = x[i];
            const double out = b0 * in + z1;
            z1 = b1 * in - a1 * out + z2;
            z2 = b2 * in - a2 * out;
            y[i] = out;
        }
        return y;
    }
};

inline Biquad butterworth_highpass(double cutoff_hz, double sample_rate) {
    const double pi = 3.14159265358979323846;
    const double k = std::tan(pi * cutoff_hz / sample_rate);
    const double sqrt2 = 1.41421356237309504880;
    const double norm = 1.0 / (1.0 + sqrt2 * k + k * k);
    Biquad q{};
    q.b0 = norm;
    q.b1 = -2.0 * norm;
    q.b2 = norm;
    q.a1 = 2.0 * (k * k - 1.0) * norm;
    q.a2 = (1.0 - sqrt2 * k + k * k) * norm;
    return q;
}

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double idx = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(idx);
    const double frac = idx - static_cast<double>(lo);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace detail

/// 2nd-order Butterworth high-pass, run forward then backward for zero phase.
/// Length preserved.
inline AudioBuffer high_pass_filter(const AudioBuffer& buffer, double cutoff_hz) {
    if (!(cutoff_hz > 0.0 && cutoff_hz < buffer.sample_rate / 2.0))
        throw Error("cutoff must be in (0, sample_rate/2)");
    const auto bq = detail::butterworth_highpass(cutoff_hz, buffer.sample_rate);

    std::vector<double> y = bq.run(buffer.samples);
    std::reverse(y.begin(), y.end());
    y = bq.run(y);
    std::reverse(y.begin(), y.end());

    AudioBuffer out = buffer;
    out.samples = std::move(y);
    return out;
}

/// Spectral gating noise reduction. A per-frequency noise floor (median
/// magnitude over frames, capped by the global background so persistent
/// narrowband signal does not gate itself) sets a threshold floor + 6 dB;
/// time-frequency bins below it are attenuated by 0.1 and the signal is
/// rebuilt by inverse STFT. Length preserved.
inline AudioBuffer noise_reduce(const AudioBuffer& buffer, const SpectrogramParams& params,
                                double threshold_db = 6.0, double attenuation = 0.1) {
    params.validate();
    if (buffer.samples.size() < params.n_fft)
        throw TooShort("noise_reduce needs at least n_fft samples");

    CMatrix spec = stft(buffer, params);
    const double gate_ratio = std::pow(10.0, threshold_db / 20.0);

    // per-frequency level: median magnitude over frames
    std::vector<double> row_level(spec.rows);
    std::vector<double> mags(spec.cols);
    for (std::size_t k = 0; k < spec.rows; ++k) {
        for (std::size_t t = 0; t < spec.cols; ++t) mags[t] = std::abs(spec(k, t));
        row_level[k] = detail::percentile(mags, 0.50);
    }
    // global background: median across frequencies; rows holding steady
    // signal sit far above it and must not raise their own gate
    const double background = detail::percentile(row_level, 0.50);

    for (std::size_t k = 0; k < spec.rows; ++k) {
        const double gate = std::min(row_level[k], background) * gate_ratio;
        for (std::size_t t = 0; t < spec.cols; ++t)
            if (std::abs(spec(k, t)) < gate) spec(k, t) *= attenuation;
    }

    AudioBuffer out = buffer;
    out.samples = istft(spec, params, buffer.samples.size());
    return out;
}

}  // namespace birdsong
