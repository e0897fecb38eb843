#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

// Small spectrum utilities used by the filter-visualisation export and by
// frequency-domain test oracles. Radix-2 FFT for power-of-two sizes, naive
// DFT otherwise (the filter probe length of 729 is tiny, so O(n^2) is fine).

namespace clmrkit::dsp {

// In-place radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a);

// Magnitude spectrum, bins 0..n/2 inclusive (n/2 + 1 values).
std::vector<double> magnitude_spectrum(std::span<const float> x);

// Index of the largest-magnitude bin at or above min_bin.
size_t peak_bin(const std::vector<double>& mag, size_t min_bin = 1);

inline double bin_to_hz(size_t bin, size_t n, int sample_rate) {
    return static_cast<double>(bin) * sample_rate / static_cast<double>(n);
}

} // namespace clmrkit::dsp
