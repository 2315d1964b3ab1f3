#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

// Small value-side numeric helpers shared by the bank, losses and metrics.
// Everything here operates on raw buffers and records nothing on a tape.

namespace tta {

inline constexpr double kNormGuard = 1e-12;

inline int argmax_lowest_tie(std::span<const double> v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

inline double logsumexp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// Stable softmax of a logits vector.
inline std::vector<double> softmax_values(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        s += out[i];
    }
    for (double& x : out) x /= s;
    return out;
}

// Shannon entropy of softmax(logits), in nats. Computed as
// lse(p) - sum_k softmax(p)_k * p_k, which stays finite for extreme logits.
inline double shannon_entropy(std::span<const double> logits) {
    const double lse = logsumexp(logits);
    double acc = 0.0;
    for (double x : logits) acc += std::exp(x - lse) * x;
    double h = lse - acc;
    return h > 0.0 ? h : 0.0;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

// Cosine similarity with a small additive guard on each norm so the value is
// defined (as 0) when either vector is exactly zero.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    return dot(a, b) / ((l2_norm(a) + kNormGuard) * (l2_norm(b) + kNormGuard));
}

}  // namespace tta
