// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otfedit/error.hpp"
#include "otfedit/tensor.hpp"
#include "otfedit/tensor_io.hpp"

namespace otf {

// Edit direction: mean after-edit embedding minus mean before-edit embedding,
// kept at full token-sequence shape so it can be added to conditioning.
template <typename Scalar>
struct DirectionEmbedding {
    Embedding<Scalar> matrix;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
};

namespace detail {

template <typename Scalar>
std::string shape_of(const Embedding<Scalar>& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace detail

// Entrywise mean of a non-empty set of equally shaped embeddings.
template <typename Scalar>
Embedding<Scalar> mean_embedding(std::span<const Embedding<Scalar>> set) {
    if (set.empty()) throw ShapeError("cannot average an empty embedding set");
    Embedding<Scalar> sum = set.front();
    for (std::size_t i = 1; i < set.size(); ++i) {
        if (set[i].rows() != sum.rows() || set[i].cols() != sum.cols()) {
            throw ShapeError("embedding " + detail::shape_of(set[i]) + " does not match " + detail::shape_of(sum));
        }
        sum += set[i];
    }
    return sum / static_cast<Scalar>(set.size());
}

template <typename Scalar>
DirectionEmbedding<Scalar> compute_direction(std::span<const Embedding<Scalar>> before,
                                             std::span<const Embedding<Scalar>> after) {
    if (before.empty() || after.empty()) throw ShapeError("caption embedding sets must be non-empty");
    auto mean_before = mean_embedding(before);
    auto mean_after = mean_embedding(after);
    if (mean_before.rows() != mean_after.rows() || mean_before.cols() != mean_after.cols()) {
        throw ShapeError("before/after embeddings differ in shape: " + detail::shape_of(mean_before) + " vs " +
                         detail::shape_of(mean_after));
    }
    return {mean_after - mean_before};
}

template <typename Scalar>
DirectionEmbedding<Scalar> compute_direction(const std::vector<Embedding<Scalar>>& before,
                                             const std::vector<Embedding<Scalar>>& after) {
    return compute_direction(std::span<const Embedding<Scalar>>(before), std::span<const Embedding<Scalar>>(after));
}

// base + strength * direction
template <typename Scalar>
ConditioningEmbedding<Scalar> apply_direction(const ConditioningEmbedding<Scalar>& base,
                                              const DirectionEmbedding<Scalar>& direction, Scalar strength = Scalar(1)) {
    if (base.rows() != direction.rows() || base.cols() != direction.cols()) {
        throw ShapeError("direction " + detail::shape_of(direction.matrix) + " does not match conditioning " +
                         detail::shape_of(base));
    }
    if (!std::isfinite(static_cast<double>(strength))) throw NumericError("direction strength is not finite");
    return base + strength * direction.matrix;
}

inline void save_direction(const std::filesystem::path& path, const DirectionEmbedding<float>& direction) {
    TensorFile file{{static_cast<std::uint64_t>(direction.rows()), static_cast<std::uint64_t>(direction.cols())},
                    std::vector<float>(direction.matrix.data(), direction.matrix.data() + direction.matrix.size())};
    write_tensor_file(path, file);
}

inline DirectionEmbedding<float> load_direction(const std::filesystem::path& path) {
    const auto file = read_tensor_file(path);
    if (file.dims.size() != 2) throw ShapeError("direction file must hold a rank-2 tensor");
    Embedding<float> m(static_cast<Eigen::Index>(file.dims[0]), static_cast<Eigen::Index>(file.dims[1]));
    std::copy(file.values.begin(), file.values.end(), m.data());
    return {std::move(m)};
}

}  // namespace otf
