#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace birdsong {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define BIRDSONG_ERROR(Name)                         \
    class Name : public Error {                      \
    public:                                          \
        using Error::Error;                          \
    }

// audio-io
BIRDSONG_ERROR(MalformedContainer);
BIRDSONG_ERROR(UnsupportedEncoding);
BIRDSONG_ERROR(ParseError);
BIRDSONG_ERROR(DuplicateId);
BIRDSONG_ERROR(NetworkError);
BIRDSONG_ERROR(ApiSchemaChanged);
// dsp
BIRDSONG_ERROR(EmptySignal);
BIRDSONG_ERROR(DegenerateBand);
BIRDSONG_ERROR(TooShort);
// augmentation
BIRDSONG_ERROR(SilentClip);
// rebalance
BIRDSONG_ERROR(TooFewSamples);
// classifiers
BIRDSONG_ERROR(EmptyTrainingSet);
BIRDSONG_ERROR(ShapeMismatch);
BIRDSONG_ERROR(NonFiniteLoss);
BIRDSONG_ERROR(BadMagic);
BIRDSONG_ERROR(UnsupportedVersion);
BIRDSONG_ERROR(TruncatedPayload);
// evaluation
BIRDSONG_ERROR(LengthMismatch);
BIRDSONG_ERROR(TooFewItems);
BIRDSONG_ERROR(EmptyGroup);

#undef BIRDSONG_ERROR

/// Dense row-major matrix of doubles. Deliberately minimal; the DSP and
/// classifier code only needs element access and sizes.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool empty() const { return data.empty(); }
};

/// Complex-valued counterpart used for STFT frames.
struct CMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::complex<double>> data;

    CMatrix() = default;
    CMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}

    std::complex<double>& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const std::complex<double>& operator()(std::size_t r, std::size_t c) const {
        return data[r * cols + c];
    }

    bool empty() const { return data.empty(); }
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double rms(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace birdsong
