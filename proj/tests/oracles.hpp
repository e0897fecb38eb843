#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

// Brute-force reference implementations used as independent oracles. These
// deliberately avoid the library's algorithms: the loss materializes the full
// similarity matrix with no max-subtraction, ROC counts pairs in O(n^2), and
// average precision rescans the data at every threshold.

namespace oracles {

inline double ntxent_bruteforce(const std::vector<float>& z, int rows, int dim,
                                const std::vector<int>& partner, double tau) {
    auto sim = [&](int i, int k) {
        double dot = 0, ni = 0, nk = 0;
        for (int j = 0; j < dim; ++j) {
            double a = z[static_cast<size_t>(i * dim + j)];
            double b = z[static_cast<size_t>(k * dim + j)];
            dot += a * b;
            ni += a * a;
            nk += b * b;
        }
        return dot / (std::sqrt(ni) * std::sqrt(nk));
    };
    double total = 0.0;
    for (int i = 0; i < rows; ++i) {
        double denom = 0.0;
        for (int k = 0; k < rows; ++k)
            if (k != i) denom += std::exp(sim(i, k) / tau);
        total += -std::log(std::exp(sim(i, partner[static_cast<size_t>(i)]) / tau) / denom);
    }
    return total / rows;
}

inline double roc_auc_bruteforce(std::span<const double> scores,
                                 std::span<const uint8_t> labels) {
    double u = 0.0;
    int64_t pos = 0, neg = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        ++pos;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) u += 1.0;
            else if (scores[i] == scores[j]) u += 0.5;
        }
    }
    for (uint8_t l : labels) neg += l ? 0 : 1;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

inline double pr_auc_bruteforce(std::span<const double> scores,
                                std::span<const uint8_t> labels) {
    std::vector<double> thresholds(scores.begin(), scores.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    int64_t pos = 0;
    for (uint8_t l : labels) pos += l ? 1 : 0;
    double ap = 0.0;
    int64_t prev_tp = 0;
    for (double t : thresholds) {
        int64_t tp = 0, fp = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) {
                if (labels[i]) ++tp; else ++fp;
            }
        }
        if (tp > prev_tp) {
            double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            ap += precision * static_cast<double>(tp - prev_tp) / static_cast<double>(pos);
        }
        prev_tp = tp;
    }
    return ap;
}

} // namespace oracles
