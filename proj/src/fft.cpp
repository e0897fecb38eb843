#include "clmrkit/fft.hpp"

#include <cmath>

namespace clmrkit::dsp {

void fft_radix2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    if (n < 2) return;
    // bit-reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * M_PI / static_cast<double>(len);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

std::vector<double> magnitude_spectrum(std::span<const float> x) {
    const size_t n = x.size();
    std::vector<double> mag(n / 2 + 1, 0.0);
    if (n == 0) return mag;
    if ((n & (n - 1)) == 0) {
        std::vector<std::complex<double>> a(n);
        for (size_t i = 0; i < n; ++i) a[i] = std::complex<double>(x[i], 0.0);
        fft_radix2(a);
        for (size_t k = 0; k <= n / 2; ++k) mag[k] = std::abs(a[k]);
        return mag;
    }
    // naive DFT for non-power-of-two sizes
    for (size_t k = 0; k <= n / 2; ++k) {
        double re = 0.0, im = 0.0;
        double w = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
        for (size_t t = 0; t < n; ++t) {
            double ang = w * static_cast<double>(t);
            re += x[t] * std::cos(ang);
            im += x[t] * std::sin(ang);
        }
        mag[k] = std::hypot(re, im);
    }
    return mag;
}

size_t peak_bin(const std::vector<double>& mag, size_t min_bin) {
    size_t best = min_bin < mag.size() ? min_bin : 0;
    for (size_t k = best; k < mag.size(); ++k) {
        if (mag[k] > mag[best]) best = k;
    }
    return best;
}

} // namespace clmrkit::dsp
