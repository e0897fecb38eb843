#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "clmrkit/audio.hpp"
#include "clmrkit/autodiff.hpp"
#include "clmrkit/rng.hpp"

namespace testutil {

inline clmrkit::audio::AudioBuffer sine(double freq_hz, int sample_rate, int64_t n_samples,
                                        double amplitude = 0.5, double phase = 0.0) {
    clmrkit::audio::AudioBuffer buf;
    buf.sample_rate = sample_rate;
    buf.samples.resize(static_cast<size_t>(n_samples));
    double w = 2.0 * M_PI * freq_hz / sample_rate;
    for (int64_t i = 0; i < n_samples; ++i)
        buf.samples[static_cast<size_t>(i)] = static_cast<float>(amplitude * std::sin(w * i + phase));
    return buf;
}

inline double correlation(const std::vector<float>& a, const std::vector<float>& b) {
    double sa = 0, sb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sa += static_cast<double>(a[i]) * a[i];
        sb += static_cast<double>(b[i]) * b[i];
    }
    if (sa == 0.0 || sb == 0.0) return 0.0;
    double dot = 0;
    for (size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
    return dot / std::sqrt(sa * sb);
}

// Central finite differences (h = 1e-3) against the analytic gradients of
// `leaves`, for the scalar <weights, forward()>. The contraction runs in
// float64 inside the checker, so output entries untouched by a perturbation
// cancel bit-exactly and contribute no rounding noise. Returns the worst
// relative error.
inline double max_gradient_error(const std::function<clmrkit::ad::Tensor()>& forward,
                                 std::vector<clmrkit::ad::Tensor> leaves, double h = 1e-3) {
    using clmrkit::ad::Tensor;
    for (auto& leaf : leaves) leaf.zero_grad();

    Tensor out = forward();
    clmrkit::Rng wrng(0xC0FFEE);
    std::vector<float> weights(out.data().size());
    for (float& w : weights) w = static_cast<float>(wrng.uniform(0.2, 1.0));

    auto contract = [&](const Tensor& t) {
        double acc = 0.0;
        for (size_t i = 0; i < t.data().size(); ++i)
            acc += static_cast<double>(weights[i]) * t.data()[i];
        return acc;
    };

    // analytic pass: seed the output grad with the weights, run backward
    Tensor weight_tensor = Tensor::from_data(out.shape(), weights);
    clmrkit::ad::backward(clmrkit::ad::sum_all(clmrkit::ad::mul(out, weight_tensor)));
    std::vector<std::vector<float>> analytic;
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    // relative error between the two gradient vectors, per leaf
    double worst = 0.0;
    for (size_t l = 0; l < leaves.size(); ++l) {
        auto& data = leaves[l].data();
        double diff_sq = 0.0, fd_sq = 0.0, an_sq = 0.0;
        for (size_t i = 0; i < data.size(); ++i) {
            float saved = data[i];
            data[i] = static_cast<float>(saved + h);
            double f_plus = contract(forward());
            data[i] = static_cast<float>(saved - h);
            double f_minus = contract(forward());
            data[i] = saved;
            double fd = (f_plus - f_minus) / (2.0 * h);
            double an = analytic[l][i];
            diff_sq += (fd - an) * (fd - an);
            fd_sq += fd * fd;
            an_sq += an * an;
        }
        double err = std::sqrt(diff_sq) / (std::sqrt(fd_sq) + std::sqrt(an_sq) + 1e-8);
        if (err > worst) worst = err;
    }
    return worst;
}

// Upper chi-square critical value at alpha = 0.01 (Wilson-Hilferty).
inline double chi2_critical_99(int df) {
    double z = 2.3263478740408408; // Phi^-1(0.99)
    double a = 2.0 / (9.0 * df);
    double c = 1.0 - a + z * std::sqrt(a);
    return df * c * c * c;
}

class TempDir {
public:
    explicit TempDir(const std::string& name) {
        path_ = std::filesystem::temp_directory_path() / ("clmrkit_" + name);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& child = "") const {
        return child.empty() ? path_.string() : (path_ / child).string();
    }

private:
    std::filesystem::path path_;
};

} // namespace testutil
