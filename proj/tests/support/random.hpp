// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Hand-rolled generators for property tests.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "otfedit/scheduler.hpp"
#include "otfedit/tensor.hpp"

namespace otf::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <typename Scalar = double>
LatentTensor<Scalar> random_latent(std::mt19937_64& rng, LatentShape shape, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    LatentTensor<Scalar> x(shape);
    for (Eigen::Index r = 0; r < x.values().rows(); ++r)
        for (Eigen::Index c = 0; c < x.values().cols(); ++c) x.values()(r, c) = static_cast<Scalar>(normal(rng));
    return x;
}

// Strictly decreasing alpha_bar in [lo, 1] on a strictly increasing grid.
template <typename Scalar = double>
DiffusionSchedule<Scalar> random_schedule(std::mt19937_64& rng, int steps, double lo = 0.01) {
    std::vector<double> a;
    while (static_cast<int>(a.size()) < steps + 1) {
        a.clear();
        for (int i = 0; i <= steps; ++i) a.push_back(uniform(rng, lo, 1.0));
        std::sort(a.begin(), a.end(), std::greater<>());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    std::vector<int> grid{0};
    for (int i = 1; i <= steps; ++i) grid.push_back(grid.back() + 1 + static_cast<int>(rng() % 20));
    return DiffusionSchedule<Scalar>(grid, std::vector<Scalar>(a.begin(), a.end()));
}

// Synthetic 1000-step linear-beta training schedule subsampled to `steps`.
template <typename Scalar = double>
DiffusionSchedule<Scalar> synthetic_schedule(int steps) {
    TrainingSchedule train{training_alpha_bar(1000, 1e-4, 0.02, BetaSchedule::linear), 1, false};
    return make_schedule<Scalar>(train, steps);
}

inline std::string random_words(std::mt19937_64& rng, int min_words, int max_words) {
    static const char* alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789,.'-!?";
    const int n_alpha = static_cast<int>(std::char_traits<char>::length(alphabet));
    const int words = min_words + static_cast<int>(rng() % (max_words - min_words + 1));
    std::string out;
    for (int w = 0; w < words; ++w) {
        if (w) out += ' ';
        const int len = 1 + static_cast<int>(rng() % 9);
        for (int i = 0; i < len; ++i) out += alphabet[rng() % n_alpha];
    }
    return out;
}

}  // namespace otf::testing
