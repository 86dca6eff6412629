#pragma once

#include <cmath>
#include <vector>

#include "birdsong/audio.hpp"
#include "birdsong/core.hpp"
#include "birdsong/fft.hpp"

namespace birdsong {

/// Analysis parameters. The paper fixes fmin = 1500 Hz and n_mels = 30; the
/// rest are the usual toolkit defaults at 22050 Hz.
struct SpectrogramParams {
    std::size_t n_fft = 2048;
    std::size_t hop = 512;
    std::size_t n_mels = 30;
    double fmin = 1500.0;
    double fmax = 11025.0;
    int sample_rate = kCanonicalRate;

    void validate() const {
        if (!is_power_of_two(n_fft)) throw Error("n_fft must be a power of two");
        if (hop == 0 || hop > n_fft) throw Error("hop must be in (0, n_fft]");
        if (n_mels < 1) throw Error("n_mels must be >= 1");
        if (sample_rate <= 0) throw Error("sample_rate must be positive");
        if (!(0.0 <= fmin && fmin < fmax && fmax <= sample_rate / 2.0))
            throw Error("need 0 <= fmin < fmax <= sample_rate/2");
    }

    std::size_t n_bins() const { return n_fft / 2 + 1; }
};

struct MelSpectrogram {
    Matrix power;  // [n_mels x n_frames]
    SpectrogramParams params;
};

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

namespace detail {

/// Reflect indexing without edge repetition (…x2 x1 | x0 x1 x2 … xn-1 | xn-2…).
inline double reflect_sample(const std::vector<double>& x, std::ptrdiff_t i) {
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    if (n == 1) return x[0];
    const std::ptrdiff_t period = 2 * (n - 1);
    std::ptrdiff_t j = i % period;
    if (j < 0) j += period;
    if (j >= n) j = period - j;
    return x[static_cast<std::size_t>(j)];
}

}  // namespace detail

/// Short-time Fourier transform: Hann-windowed, hop-spaced frames,
/// reflect-padded so frame t is centered at sample t*hop.
/// Output shape [n_fft/2+1 x n_frames], n_frames = floor(len/hop) + 1.
inline CMatrix stft(const AudioBuffer& buffer, const SpectrogramParams& params) {
    params.validate();
    if (buffer.samples.empty()) throw EmptySignal("stft of empty signal");

    const std::size_t n_fft = params.n_fft;
    const std::size_t hop = params.hop;
    const std::size_t n_frames = buffer.samples.size() / hop + 1;
    const auto window = hann_window(n_fft);
    const auto half = static_cast<std::ptrdiff_t>(n_fft / 2);

    CMatrix out(params.n_bins(), n_frames);
    std::vector<double> frame(n_fft);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const auto center = static_cast<std::ptrdiff_t>(t * hop);
        for (std::size_t i = 0; i < n_fft; ++i) {
            const std::ptrdiff_t src = center - half + static_cast<std::ptrdiff_t>(i);
            frame[i] = detail::reflect_sample(buffer.samples, src) * window[i];
        }
        auto spec = rfft(frame);
        for (std::size_t k = 0; k < spec.size(); ++k) out(k, t) = spec[k];
    }
    return out;
}

/// Inverse STFT via weighted overlap-add with the same Hann window;
/// reconstructs `expected_len` samples (the stft center padding is trimmed).
inline std::vector<double> istft(const CMatrix& spec, const SpectrogramParams& params,
                                 std::size_t expected_len) {
    params.validate();
    const std::size_t n_fft = params.n_fft;
    const std::size_t hop = params.hop;
    const std::size_t n_frames = spec.cols;
    const auto window = hann_window(n_fft);

    const std::size_t padded_len = (n_frames - 1) * hop + n_fft;
    std::vector<double> acc(padded_len, 0.0);
    std::vector<double> norm(padded_len, 0.0);
    std::vector<std::complex<double>> half(spec.rows);

    for (std::size_t t = 0; t < n_frames; ++t) {
        for (std::size_t k = 0; k < spec.rows; ++k) half[k] = spec(k, t);
        auto frame = irfft(half, n_fft);
        const std::size_t offset = t * hop;
        for (std::size_t i = 0; i < n_fft; ++i) {
            acc[offset + i] += frame[i] * window[i];
            norm[offset + i] += window[i] * window[i];
        }
    }

    // frames are centered at t*hop, so sample s lives at padded index s + n_fft/2
    std::vector<double> out(expected_len, 0.0);
    const std::size_t lead = n_fft / 2;
    for (std::size_t s = 0; s < expected_len; ++s) {
        const std::size_t i = s + lead;
        if (i < padded_len && norm[i] > 1e-12) out[s] = acc[i] / norm[i];
    }
    return out;
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Triangular mel filterbank [n_mels x n_fft/2+1]: centers uniformly spaced
/// on the mel scale between fmin and fmax, each filter area-normalized by
/// 2/(f_hi - f_lo) (slaney style).
inline Matrix mel_filterbank(const SpectrogramParams& params) {
    params.validate();
    const std::size_t n_bins = params.n_bins();
    if (n_bins < params.n_mels + 2)
        throw DegenerateBand("fewer FFT bins than mel filter centers");

    const double mel_lo = hz_to_mel(params.fmin);
    const double mel_hi = hz_to_mel(params.fmax);
    std::vector<double> centers_hz(params.n_mels + 2);
    for (std::size_t i = 0; i < centers_hz.size(); ++i) {
        const double m = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(params.n_mels + 1);
        centers_hz[i] = mel_to_hz(m);
    }

    Matrix fb(params.n_mels, n_bins, 0.0);
    const double bin_hz = static_cast<double>(params.sample_rate) / static_cast<double>(params.n_fft);
    for (std::size_t m = 0; m < params.n_mels; ++m) {
        const double f_lo = centers_hz[m];
        const double f_c = centers_hz[m + 1];
        const double f_hi = centers_hz[m + 2];
        const double scale = 2.0 / (f_hi - f_lo);
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = bin_hz * static_cast<double>(k);
            const double up = (f - f_lo) / (f_c - f_lo);
            const double down = (f_hi - f) / (f_hi - f_c);
            const double w = std::min(up, down);
            if (w > 0.0) fb(m, k) = w * scale;
        }
    }
    return fb;
}

/// Mel power spectrogram: filterbank x |stft|^2.
inline MelSpectrogram mel_spectrogram(const AudioBuffer& buffer, const SpectrogramParams& params) {
    const CMatrix spec = stft(buffer, params);
    const Matrix fb = mel_filterbank(params);

    MelSpectrogram out;
    out.params = params;
    out.power = Matrix(params.n_mels, spec.cols, 0.0);
    // accumulate through the sparse triangular rows
    for (std::size_t m = 0; m < fb.rows; ++m) {
        for (std::size_t k = 0; k < fb.cols; ++k) {
            const double w = fb(m, k);
            if (w == 0.0) continue;
            for (std::size_t t = 0; t < spec.cols; ++t)
                out.power(m, t) += w * std::norm(spec(k, t));
        }
    }
    return out;
}

/// Convert a power matrix to dB relative to its max entry, floored at -80:
/// 10*log10(p / ref) in [-80, 0]. An all-zero matrix maps to all -80.
inline Matrix log_amplitude(const Matrix& power) {
    Matrix out(power.rows, power.cols, -80.0);
    double ref = 0.0;
    for (double p : power.data) ref = std::max(ref, p);
    if (ref <= 0.0) return out;
    for (std::size_t i = 0; i < power.data.size(); ++i) {
        const double p = power.data[i];
        if (p <= 0.0) continue;
        out.data[i] = std::max(10.0 * std::log10(p / ref), -80.0);
    }
    return out;
}

/// Orthonormal DCT-II matrix rows [first_coef, first_coef + n_coefs) over
/// inputs of length m.
inline Matrix dct2_matrix(std::size_t n_coefs, std::size_t m, std::size_t first_coef) {
    const double pi = 3.14159265358979323846;
    Matrix dct(n_coefs, m);
    for (std::size_t r = 0; r < n_coefs; ++r) {
        const std::size_t k = first_coef + r;
        const double scale = k == 0 ? std::sqrt(1.0 / static_cast<double>(m))
                                    : std::sqrt(2.0 / static_cast<double>(m));
        for (std::size_t j = 0; j < m; ++j)
            dct(r, j) = scale * std::cos(pi * (static_cast<double>(j) + 0.5) *
                                         static_cast<double>(k) / static_cast<double>(m));
    }
    return dct;
}

/// MFCCs: orthonormal DCT-II of the dB mel spectrogram, per frame.
/// Coefficient 0 (frame energy) is dropped by default, so the returned rows
/// are DCT coefficients 1..n_mfcc; include_c0 keeps 0..n_mfcc-1 instead.
inline Matrix mfcc(const AudioBuffer& buffer, std::size_t n_mfcc, const SpectrogramParams& params,
                   bool include_c0 = false) {
    if (n_mfcc > params.n_mels) throw Error("n_mfcc must be <= n_mels");
    const Matrix db = log_amplitude(mel_spectrogram(buffer, params).power);
    const Matrix dct = dct2_matrix(n_mfcc, params.n_mels, include_c0 ? 0 : 1);

    Matrix out(n_mfcc, db.cols, 0.0);
    for (std::size_t r = 0; r < n_mfcc; ++r)
        for (std::size_t j = 0; j < params.n_mels; ++j) {
            const double w = dct(r, j);
            for (std::size_t t = 0; t < db.cols; ++t) out(r, t) += w * db(j, t);
        }
    return out;
}

/// Per-frame zero-crossing rate: sign changes between consecutive samples
/// divided by frame length. sign(0) counts as positive. Frames start at
/// i*hop; only complete frames are emitted.
inline std::vector<double> zcr(const AudioBuffer& buffer, std::size_t frame, std::size_t hop) {
    if (frame < 2) throw Error("zcr frame must be >= 2");
    if (hop == 0) throw Error("zcr hop must be positive");
    std::vector<double> rates;
    const auto& x = buffer.samples;
    if (x.size() < frame) return rates;

    auto positive = [](double v) { return v >= 0.0; };
    const std::size_t n_frames = (x.size() - frame) / hop + 1;
    rates.reserve(n_frames);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const std::size_t start = t * hop;
        std::size_t crossings = 0;
        for (std::size_t i = 1; i < frame; ++i)
            if (positive(x[start + i]) != positive(x[start + i - 1])) ++crossings;
        rates.push_back(static_cast<double>(crossings) / static_cast<double>(frame));
    }
    return rates;
}

}  // namespace birdsong
