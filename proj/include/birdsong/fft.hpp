#pragma once

#include <complex>
#include <vector>

#include "birdsong/core.hpp"

namespace birdsong {

/// Iterative radix-2 Cooley-Tukey FFT, in place. Size must be a power of two
/// (SpectrogramParams enforces this for all callers).
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse = false) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    if (!is_power_of_two(n)) throw ShapeMismatch("fft size must be a power of two");

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    const double pi = 3.14159265358979323846;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

/// Forward DFT of a real frame; returns the non-redundant half spectrum
/// (n/2 + 1 bins).
inline std::vector<std::complex<double>> rfft(const std::vector<double>& frame) {
    std::vector<std::complex<double>> buf(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = {frame[i], 0.0};
    fft_inplace(buf);
    buf.resize(frame.size() / 2 + 1);
    return buf;
}

/// Inverse of rfft: reconstruct a real frame of length n from n/2+1 bins.
inline std::vector<double> irfft(const std::vector<std::complex<double>>& half, std::size_t n) {
    std::vector<std::complex<double>> buf(n);
    for (std::size_t i = 0; i < half.size() && i < n; ++i) buf[i] = half[i];
    for (std::size_t i = half.size(); i < n; ++i) buf[i] = std::conj(buf[n - i]);
    fft_inplace(buf, true);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
    return out;
}

}  // namespace birdsong
