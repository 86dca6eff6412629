#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "birdsong/audio.hpp"
#include "birdsong/core.hpp"
#include "birdsong/denoise.hpp"
#include "birdsong/dsp.hpp"
#include "birdsong/manifest.hpp"
#include "birdsong/rng.hpp"

namespace birdsong {

/// One labeled training clip cut from a source recording. `augmentations`
/// records exactly the transforms applied, in order.
struct ClipRecord {
    std::string source_id;
    double start_s = 0.0;
    double end_s = 0.0;
    std::string label;
    Category category = Category::other;
    std::vector<std::string> augmentations;
    AudioBuffer samples;

    std::string clip_id() const {
        std::string id = source_id + ":" + std::to_string(static_cast<long long>(
                                               std::llround(start_s * 1000.0)));
        for (const auto& tag : augmentations) id += ":" + tag;
        return id;
    }
};

/// Which transforms a plan applies, with their parameters. apply_plan runs
/// them in the fixed order: nonsilent, highpass, pitch_shift, wrap, gaussian.
struct TransformSet {
    bool nonsilent = false;
    double nonsilent_top_db = 30.0;
    bool highpass = false;
    double highpass_cutoff_hz = 1500.0;
    bool pitch_shift = false;
    int pitch_steps = 4;
    bool wrap = false;
    bool gaussian = false;
    double gaussian_snr_db = 20.0;
};

struct AugmentPlan {
    double window_s = 10.0;
    double stride_s = 0.0;      // 0 = non-overlapping (stride = window)
    double min_len_s = 5.0;
    double head_limit_s = 0.0;  // <= 0 = unlimited
    bool with_origin = false;   // keep the non-overlapping pass alongside the strided one
    TransformSet transforms;

    void validate() const {
        if (window_s <= 0.0) throw Error("plan window must be positive");
        if (stride_s < 0.0) throw Error("plan stride must be >= 0");
        if (min_len_s > window_s) throw Error("plan min_len must be <= window");
    }

    std::string describe() const {
        std::string s = std::to_string(static_cast<int>(window_s)) + "s";
        if (with_origin) s += " origin";
        if (stride_s > 0.0)
            s += (with_origin ? " + " : " ") + std::to_string(static_cast<int>(stride_s)) +
                 "s stride";
        if (transforms.nonsilent) s += " nonsilent";
        if (transforms.highpass) s += " filter";
        if (transforms.pitch_shift) s += " pitch";
        if (transforms.wrap) s += " wrap";
        if (transforms.gaussian) s += " gaussian";
        return s;
    }
};

/// Cut fixed windows out of a recording. Windows start at 0, stride_s apart
/// (stride 0 means back to back), confined to the first head_limit_s. After
/// the last full window, one short tail is kept iff it is at least
/// min_len_s long, zero-padded back to window_s.
inline std::vector<ClipRecord> split_clips(const AudioBuffer& buffer, double window_s,
                                           double stride_s, double min_len_s,
                                           double head_limit_s = 0.0,
                                           const std::string& source_id = "",
                                           const std::string& label = "",
                                           Category category = Category::other) {
    const double sr = buffer.sample_rate;
    const auto window = static_cast<std::size_t>(std::llround(window_s * sr));
    const auto stride =
        stride_s > 0.0 ? static_cast<std::size_t>(std::llround(stride_s * sr)) : window;
    const auto min_len = static_cast<std::size_t>(std::llround(min_len_s * sr));

    std::size_t limit = buffer.samples.size();
    if (head_limit_s > 0.0)
        limit = std::min(limit, static_cast<std::size_t>(std::llround(head_limit_s * sr)));

    std::vector<ClipRecord> clips;
    if (window == 0 || stride == 0) return clips;

    std::size_t start = 0;
    while (start + window <= limit) {
        ClipRecord c;
        c.source_id = source_id;
        c.label = label;
        c.category = category;
        c.start_s = static_cast<double>(start) / sr;
        c.end_s = static_cast<double>(start + window) / sr;
        c.samples.sample_rate = buffer.sample_rate;
        c.samples.samples.assign(buffer.samples.begin() + static_cast<std::ptrdiff_t>(start),
                                 buffer.samples.begin() + static_cast<std::ptrdiff_t>(start + window));
        clips.push_back(std::move(c));
        start += stride;
    }
    // one short tail, kept only when it is long enough, padded to the window
    if (start < limit && limit - start >= min_len && min_len > 0) {
        ClipRecord c;
        c.source_id = source_id;
        c.label = label;
        c.category = category;
        c.start_s = static_cast<double>(start) / sr;
        c.end_s = static_cast<double>(limit) / sr;
        c.samples.sample_rate = buffer.sample_rate;
        c.samples.samples.assign(buffer.samples.begin() + static_cast<std::ptrdiff_t>(start),
                                 buffer.samples.begin() + static_cast<std::ptrdiff_t>(limit));
        c.samples.samples.resize(window, 0.0);
        clips.push_back(std::move(c));
    }
    return clips;
}

/// Swap the clip's halves: output = second half + first half. Odd lengths
/// give the extra sample to the first half.
inline ClipRecord wrap_shift(const ClipRecord& clip) {
    const auto& x = clip.samples.samples;
    if (x.size() < 2) throw Error("wrap_shift needs at least 2 samples");
    const std::size_t first_len = (x.size() + 1) / 2;

    ClipRecord out = clip;
    out.samples.samples.clear();
    out.samples.samples.reserve(x.size());
    out.samples.samples.insert(out.samples.samples.end(), x.begin() + static_cast<std::ptrdiff_t>(first_len),
                               x.end());
    out.samples.samples.insert(out.samples.samples.end(), x.begin(),
                               x.begin() + static_cast<std::ptrdiff_t>(first_len));
    out.augmentations.push_back("wrap");
    return out;
}

namespace detail {

inline double wrap_phase(double x) {
    const double two_pi = 6.283185307179586476925286766559;
    x = std::fmod(x + 3.14159265358979323846, two_pi);
    if (x < 0) x += two_pi;
    return x - 3.14159265358979323846;
}

/// Phase-vocoder core: resample the STFT frame timeline by `rate` with
/// magnitude interpolation and phase accumulation at the bin frequencies.
inline std::vector<double> phase_vocoder_stretch(const std::vector<double>& x, double rate,
                                                 const SpectrogramParams& params) {
    AudioBuffer tmp;
    tmp.samples = x;
    tmp.sample_rate = params.sample_rate;
    const CMatrix S = stft(tmp, params);
    const std::size_t n_bins = S.rows;
    const std::size_t n_frames = S.cols;

    std::vector<double> bin_advance(n_bins);  // expected phase advance per hop
    const double two_pi = 6.283185307179586476925286766559;
    for (std::size_t k = 0; k < n_bins; ++k)
        bin_advance[k] = two_pi * static_cast<double>(k) / static_cast<double>(params.n_fft) *
                         static_cast<double>(params.hop);

    std::vector<double> steps;
    for (double t = 0.0; t < static_cast<double>(n_frames); t += rate) steps.push_back(t);

    CMatrix out(n_bins, steps.size());
    std::vector<double> phase(n_bins);
    for (std::size_t k = 0; k < n_bins; ++k) phase[k] = std::arg(S(k, 0));

    for (std::size_t m = 0; m < steps.size(); ++m) {
        const double t = steps[m];
        const auto t0 = std::min(static_cast<std::size_t>(t), n_frames - 1);
        const std::size_t t1 = std::min(t0 + 1, n_frames - 1);
        const double frac = t - static_cast<double>(t0);

        for (std::size_t k = 0; k < n_bins; ++k) {
            const double mag = (1.0 - frac) * std::abs(S(k, t0)) + frac * std::abs(S(k, t1));
            out(k, m) = std::polar(mag, phase[k]);
            const double dphi =
                wrap_phase(std::arg(S(k, t1)) - std::arg(S(k, t0)) - bin_advance[k]);
            phase[k] += bin_advance[k] + dphi;
        }
    }

    const auto out_len =
        static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) / rate));
    return istft(out, params, out_len);
}

}  // namespace detail

/// Phase-vocoder time stretch: output duration ~= input / rate, pitch
/// content preserved.
inline ClipRecord time_stretch(const ClipRecord& clip, double rate,
                               const SpectrogramParams& params = {}) {
    if (rate <= 0.0) throw Error("time_stretch rate must be positive");
    ClipRecord out = clip;
    if (rate != 1.0)
        out.samples.samples = detail::phase_vocoder_stretch(clip.samples.samples, rate, params);
    out.augmentations.push_back("stretch" + std::to_string(rate));
    return out;
}

/// Pitch shift by n_steps semitones: stretch time by 2^(n/12) (phase
/// vocoder), then resample back onto the original sample count. Duration is
/// preserved; frequencies scale by 2^(n_steps/12).
inline ClipRecord pitch_shift(const ClipRecord& clip, int n_steps,
                              const SpectrogramParams& params = {}) {
    if (std::abs(n_steps) > 24) throw Error("pitch_shift limited to +/- 24 semitones");
    ClipRecord out = clip;
    if (n_steps != 0) {
        const double factor = std::pow(2.0, static_cast<double>(n_steps) / 12.0);
        const auto stretched =
            detail::phase_vocoder_stretch(clip.samples.samples, 1.0 / factor, params);
        out.samples.samples = resample_to_length(stretched, clip.samples.samples.size());
    }
    out.augmentations.push_back("pitch" + std::to_string(n_steps));
    return out;
}

/// Additive white Gaussian noise at a given SNR. Noise variance =
/// signal_power / 10^(snr_db/10); deterministic under the seed.
inline ClipRecord add_gaussian_noise(const ClipRecord& clip, double snr_db, std::uint64_t seed) {
    const double signal_rms = rms(clip.samples.samples);
    if (signal_rms <= 0.0) throw SilentClip("cannot define SNR for a silent clip");

    const double noise_std =
        signal_rms / std::sqrt(std::pow(10.0, snr_db / 10.0));
    Rng rng(seed);
    ClipRecord out = clip;
    for (auto& s : out.samples.samples) s += noise_std * rng.next_gaussian();
    out.augmentations.push_back("gaussian" + std::to_string(static_cast<int>(snr_db)));
    return out;
}

/// Split a clip on silence: frames whose RMS sits more than top_db below the
/// clip's peak frame RMS are silence; maximal non-silent runs become clips.
/// Sub-clips shorter than 0.5 s are dropped.
inline std::vector<ClipRecord> split_nonsilent(const ClipRecord& clip, double top_db = 30.0,
                                               std::size_t frame = 2048, std::size_t hop = 512) {
    const auto& x = clip.samples.samples;
    const double sr = clip.samples.sample_rate;
    const auto min_samples = static_cast<std::size_t>(std::llround(0.5 * sr));

    std::vector<double> frame_rms;
    if (x.size() < frame) {
        frame_rms.push_back(rms(x));
    } else {
        const std::size_t n = (x.size() - frame) / hop + 1;
        for (std::size_t t = 0; t < n; ++t) {
            double s = 0.0;
            for (std::size_t i = 0; i < frame; ++i) {
                const double v = x[t * hop + i];
                s += v * v;
            }
            frame_rms.push_back(std::sqrt(s / static_cast<double>(frame)));
        }
    }

    double peak = 0.0;
    for (double r : frame_rms) peak = std::max(peak, r);
    std::vector<ClipRecord> out;
    if (peak <= 0.0) return out;  // pure silence

    const double gate = peak * std::pow(10.0, -top_db / 20.0);
    std::vector<bool> loud(frame_rms.size());
    for (std::size_t t = 0; t < frame_rms.size(); ++t) loud[t] = frame_rms[t] > gate;

    std::size_t t = 0;
    while (t < loud.size()) {
        if (!loud[t]) {
            ++t;
            continue;
        }
        std::size_t run_end = t;
        while (run_end < loud.size() && loud[run_end]) ++run_end;

        const std::size_t s0 = t * hop;
        const std::size_t s1 = std::min((run_end - 1) * hop + frame, x.size());
        if (s1 - s0 >= min_samples) {
            ClipRecord c = clip;
            c.samples.samples.assign(x.begin() + static_cast<std::ptrdiff_t>(s0),
                                     x.begin() + static_cast<std::ptrdiff_t>(s1));
            c.start_s = clip.start_s + static_cast<double>(s0) / sr;
            c.end_s = clip.start_s + static_cast<double>(s1) / sr;
            c.augmentations.push_back("nonsilent");
            out.push_back(std::move(c));
        }
        t = run_end;
    }
    return out;
}

struct ApplyPlanResult {
    std::vector<ClipRecord> clips;
    std::vector<std::pair<std::string, std::string>> failures;  // (recording id, message)
};

using RecordingLoader = std::function<AudioBuffer(const RecordingEntry&)>;

inline AudioBuffer default_recording_loader(const RecordingEntry& entry) {
    return load_canonical(entry.file_path);
}

/// Expand a manifest into training clips: split each recording per the plan
/// (the origin pass plus the strided pass when requested), then run the
/// plan's transforms over every clip in the fixed order. Per-recording
/// failures are collected, not fatal. Deterministic under (manifest, plan,
/// seed): noise streams derive from (seed, source id, clip start).
inline ApplyPlanResult apply_plan(const DatasetManifest& manifest, const AugmentPlan& plan,
                                  std::uint64_t seed,
                                  const RecordingLoader& loader = default_recording_loader,
                                  const SpectrogramParams& params = {}) {
    plan.validate();
    ApplyPlanResult result;

    for (const auto& entry : manifest.entries) {
        AudioBuffer audio;
        try {
            audio = loader(entry);
        } catch (const std::exception& e) {
            result.failures.emplace_back(entry.id, e.what());
            continue;
        }

        std::vector<ClipRecord> clips;
        if (plan.with_origin && plan.stride_s > 0.0) {
            clips = split_clips(audio, plan.window_s, 0.0, plan.min_len_s, plan.head_limit_s,
                                entry.id, entry.species_label, entry.category);
            auto strided = split_clips(audio, plan.window_s, plan.stride_s, plan.min_len_s,
                                       plan.head_limit_s, entry.id, entry.species_label,
                                       entry.category);
            clips.insert(clips.end(), std::make_move_iterator(strided.begin()),
                         std::make_move_iterator(strided.end()));
        } else {
            clips = split_clips(audio, plan.window_s, plan.stride_s, plan.min_len_s,
                                plan.head_limit_s, entry.id, entry.species_label, entry.category);
        }

        const TransformSet& tf = plan.transforms;
        if (tf.nonsilent) {
            std::vector<ClipRecord> split;
            for (const auto& c : clips) {
                auto parts = split_nonsilent(c, tf.nonsilent_top_db);
                split.insert(split.end(), std::make_move_iterator(parts.begin()),
                             std::make_move_iterator(parts.end()));
            }
            clips = std::move(split);
        }

        for (auto& c : clips) {
            try {
                if (tf.highpass) {
                    c.samples = high_pass_filter(c.samples, tf.highpass_cutoff_hz);
                    c.augmentations.push_back("highpass" +
                                              std::to_string(static_cast<int>(tf.highpass_cutoff_hz)));
                }
                if (tf.pitch_shift) c = pitch_shift(c, tf.pitch_steps, params);
                if (tf.wrap) c = wrap_shift(c);
                if (tf.gaussian) {
                    const auto clip_seed =
                        derive_seed(seed, "gaussian", fnv1a(c.source_id),
                                    static_cast<std::uint64_t>(std::llround(c.start_s * 1000.0)));
                    c = add_gaussian_noise(c, tf.gaussian_snr_db, clip_seed);
                }
                result.clips.push_back(std::move(c));
            } catch (const std::exception& e) {
                result.failures.emplace_back(entry.id, e.what());
            }
        }
    }
    return result;
}

}  // namespace birdsong
