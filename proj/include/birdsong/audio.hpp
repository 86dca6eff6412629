#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "birdsong/core.hpp"

namespace birdsong {

/// Decoded audio. Samples are amplitudes in [-1, 1]; stereo is kept
/// interleaved (LRLR...) until to_mono folds it down. Everything downstream
/// of audio-io expects the canonical format: mono, 22050 Hz.
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 0;
    int channels = 1;

    std::size_t frames() const {
        return channels > 0 ? samples.size() / static_cast<std::size_t>(channels) : 0;
    }
    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(frames()) / sample_rate : 0.0;
    }
};

constexpr int kCanonicalRate = 22050;

namespace detail {

inline std::uint32_t read_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

/// Decode a RIFF/WAVE container. Accepts PCM 16-bit, PCM 24-bit and
/// IEEE-float-32, 1 or 2 channels. Integer formats are scaled by
/// 1 / 2^(bits-1).
inline AudioBuffer decode_wav(const std::vector<std::uint8_t>& bytes) {
    using detail::read_u16;
    using detail::read_u32;

    if (bytes.size() < 44) throw MalformedContainer("file too small for a WAV header");
    if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw MalformedContainer("missing RIFF/WAVE magic");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    bool have_fmt = false;
    const std::uint8_t* data_ptr = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        std::uint32_t chunk_len = read_u32(chunk + 4);
        if (pos + 8 + chunk_len > bytes.size())
            throw MalformedContainer("chunk overruns file end");
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (chunk_len < 16) throw MalformedContainer("fmt chunk too small");
            format = read_u16(chunk + 8);
            channels = read_u16(chunk + 10);
            sample_rate = read_u32(chunk + 12);
            bits = read_u16(chunk + 22);
            if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: subformat GUID leads with the tag
                if (chunk_len < 40) throw MalformedContainer("extensible fmt chunk too small");
                format = read_u16(chunk + 8 + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data_ptr = chunk + 8;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data_ptr == nullptr) throw MalformedContainer("missing fmt or data chunk");
    if (sample_rate == 0) throw MalformedContainer("zero sample rate");
    if (channels != 1 && channels != 2)
        throw UnsupportedEncoding("only mono and stereo are supported");

    const bool is_float = format == 3;
    if (format != 1 && !is_float)
        throw UnsupportedEncoding("compressed WAV format tag " + std::to_string(format));
    if (is_float && bits != 32) throw UnsupportedEncoding("only 32-bit float WAV is supported");
    if (!is_float && bits != 16 && bits != 24)
        throw UnsupportedEncoding("PCM bit depth " + std::to_string(bits) + " not supported");

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t n_samples = data_len / bytes_per_sample;

    AudioBuffer out;
    out.sample_rate = static_cast<int>(sample_rate);
    out.channels = channels;
    out.samples.resize(n_samples);

    if (is_float) {
        for (std::size_t i = 0; i < n_samples; ++i) {
            float f;
            std::memcpy(&f, data_ptr + i * 4, 4);
            out.samples[i] = std::clamp(static_cast<double>(f), -1.0, 1.0);
        }
    } else if (bits == 16) {
        for (std::size_t i = 0; i < n_samples; ++i) {
            std::int16_t s;
            std::memcpy(&s, data_ptr + i * 2, 2);
            out.samples[i] = static_cast<double>(s) / 32768.0;
        }
    } else {  // 24-bit
        for (std::size_t i = 0; i < n_samples; ++i) {
            const std::uint8_t* p = data_ptr + i * 3;
            std::int32_t s = static_cast<std::int32_t>(p[0]) | (static_cast<std::int32_t>(p[1]) << 8) |
                             (static_cast<std::int32_t>(static_cast<std::int8_t>(p[2])) << 16);
            out.samples[i] = static_cast<double>(s) / 8388608.0;
        }
    }
    return out;
}

/// Encode as PCM 16-bit WAV. decode_wav(encode_wav16(x)) reproduces PCM16
/// sample values exactly.
inline std::vector<std::uint8_t> encode_wav16(const AudioBuffer& buffer) {
    const std::uint32_t n = static_cast<std::uint32_t>(buffer.samples.size());
    const std::uint16_t channels = static_cast<std::uint16_t>(buffer.channels);
    const std::uint32_t sr = static_cast<std::uint32_t>(buffer.sample_rate);
    const std::uint32_t byte_rate = sr * channels * 2;
    const std::uint32_t data_len = n * 2;

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_len);
    auto push_u32 = [&](std::uint32_t v) {
        out.push_back(v & 0xff);
        out.push_back((v >> 8) & 0xff);
        out.push_back((v >> 16) & 0xff);
        out.push_back((v >> 24) & 0xff);
    };
    auto push_u16 = [&](std::uint16_t v) {
        out.push_back(v & 0xff);
        out.push_back((v >> 8) & 0xff);
    };
    auto push_tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };

    push_tag("RIFF");
    push_u32(36 + data_len);
    push_tag("WAVE");
    push_tag("fmt ");
    push_u32(16);
    push_u16(1);  // PCM
    push_u16(channels);
    push_u32(sr);
    push_u32(byte_rate);
    push_u16(static_cast<std::uint16_t>(channels * 2));
    push_u16(16);
    push_tag("data");
    push_u32(data_len);
    for (double x : buffer.samples) {
        double scaled = std::round(x * 32768.0);
        auto s = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        push_u16(static_cast<std::uint16_t>(s));
    }
    return out;
}

inline AudioBuffer load_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedContainer("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

inline void save_wav(const std::filesystem::path& path, const AudioBuffer& buffer) {
    auto bytes = encode_wav16(buffer);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

/// Per-frame channel mean; mono input is returned unchanged.
inline AudioBuffer to_mono(const AudioBuffer& buffer) {
    if (buffer.channels == 1) return buffer;
    AudioBuffer out;
    out.sample_rate = buffer.sample_rate;
    out.channels = 1;
    const std::size_t frames = buffer.frames();
    out.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double sum = 0.0;
        for (int c = 0; c < buffer.channels; ++c)
            sum += buffer.samples[i * buffer.channels + c];
        out.samples[i] = sum / buffer.channels;
    }
    return out;
}

namespace detail {

inline double bessel_i0(double x) {
    // series expansion; converges quickly for the beta range used here
    double sum = 1.0, term = 1.0;
    double half_x = x / 2.0;
    for (int k = 1; k < 50; ++k) {
        term *= (half_x / k) * (half_x / k);
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return sum;
}

inline double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    double px = 3.14159265358979323846 * x;
    return std::sin(px) / px;
}

/// Interpolate mono samples to an arbitrary output length with a 64-tap
/// Kaiser-windowed sinc (beta 8.6). `ratio` is out_rate / in_rate; the sinc
/// cutoff is lowered when downsampling to suppress aliasing.
inline std::vector<double> sinc_interpolate(const std::vector<double>& x, std::size_t out_len,
                                            double ratio) {
    constexpr int kTaps = 64;
    constexpr double kBeta = 8.6;
    const int half = kTaps / 2;
    const double cutoff = ratio < 1.0 ? ratio : 1.0;
    const double denom = bessel_i0(kBeta);
    const auto n = static_cast<std::ptrdiff_t>(x.size());

    std::vector<double> out(out_len, 0.0);
    if (x.empty()) return out;
    for (std::size_t m = 0; m < out_len; ++m) {
        const double t = static_cast<double>(m) / ratio;
        const auto i0 = static_cast<std::ptrdiff_t>(std::floor(t));
        double acc = 0.0;
        for (std::ptrdiff_t j = i0 - half + 1; j <= i0 + half; ++j) {
            if (j < 0 || j >= n) continue;
            const double u = t - static_cast<double>(j);
            const double w_arg = u / half;
            if (w_arg <= -1.0 || w_arg >= 1.0) continue;
            const double kaiser = bessel_i0(kBeta * std::sqrt(1.0 - w_arg * w_arg)) / denom;
            acc += x[j] * cutoff * sinc(cutoff * u) * kaiser;
        }
        out[m] = acc;
    }
    return out;
}

}  // namespace detail

/// Band-limited resampling to `target_rate`. Equal rates return the input
/// unchanged (bit-identical). Output length = round(len * target / input).
inline AudioBuffer resample(const AudioBuffer& buffer, int target_rate) {
    if (target_rate <= 0) throw Error("target_rate must be positive");
    if (buffer.channels != 1) throw Error("resample expects mono audio");
    if (buffer.sample_rate == target_rate) return buffer;

    const double ratio = static_cast<double>(target_rate) / buffer.sample_rate;
    const auto out_len = static_cast<std::size_t>(
        std::llround(static_cast<double>(buffer.samples.size()) * ratio));

    AudioBuffer out;
    out.sample_rate = target_rate;
    out.channels = 1;
    out.samples = detail::sinc_interpolate(buffer.samples, out_len, ratio);
    return out;
}

/// Stretch or squeeze a signal onto `out_len` samples (same nominal rate);
/// used by pitch shifting to undo a time stretch.
inline std::vector<double> resample_to_length(const std::vector<double>& x, std::size_t out_len) {
    if (x.empty() || out_len == 0) return std::vector<double>(out_len, 0.0);
    if (x.size() == out_len) return x;
    const double ratio = static_cast<double>(out_len) / static_cast<double>(x.size());
    return detail::sinc_interpolate(x, out_len, ratio);
}

/// decode + mono + canonical sample rate in one step.
inline AudioBuffer load_canonical(const std::filesystem::path& path,
                                  int target_rate = kCanonicalRate) {
    return resample(to_mono(load_wav(path)), target_rate);
}

}  // namespace birdsong
