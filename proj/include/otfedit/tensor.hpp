// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

#include "otfedit/error.hpp"

namespace otf {

// Token-sequence embedding: one row per token position, one column per feature.
template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Full text-encoder output for one caption.
template <typename Scalar>
using ConditioningEmbedding = Embedding<Scalar>;

struct LatentShape {
    int channels = 0;
    int height = 0;
    int width = 0;

    int pixels() const { return height * width; }
    long size() const { return static_cast<long>(channels) * height * width; }
    bool operator==(const LatentShape&) const = default;

    std::string to_string() const {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
    }
};

// (channels, height, width) tensor stored as a channels x (height*width) row-major array.
template <typename Scalar>
class LatentTensor {
public:
    using Storage = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    LatentTensor() = default;

    explicit LatentTensor(LatentShape shape)
        : shape_(shape), values_(Storage::Zero(shape.channels, shape.pixels())) {}

    LatentTensor(LatentShape shape, Storage values) : shape_(shape), values_(std::move(values)) {
        if (values_.rows() != shape_.channels || values_.cols() != shape_.pixels()) {
            throw ShapeError("latent storage does not match shape " + shape_.to_string());
        }
    }

    static LatentTensor constant(LatentShape shape, Scalar value) {
        return LatentTensor(shape, Storage::Constant(shape.channels, shape.pixels(), value));
    }

    const LatentShape& shape() const { return shape_; }
    const Storage& values() const { return values_; }
    Storage& values() { return values_; }

    Scalar& at(int c, int y, int x) { return values_(c, y * shape_.width + x); }
    Scalar at(int c, int y, int x) const { return values_(c, y * shape_.width + x); }

    bool all_finite() const { return values_.isFinite().all(); }

    template <typename Other>
    LatentTensor<Other> cast() const {
        return LatentTensor<Other>(shape_, values_.template cast<Other>());
    }

    bool operator==(const LatentTensor& other) const {
        return shape_ == other.shape_ && (values_ == other.values_).all();
    }

private:
    LatentShape shape_;
    Storage values_;
};

// What the denoiser is conditioned on at every step. When `unconditional` is
// set and guidance_scale != 1 the predictor applies classifier-free guidance.
template <typename Scalar>
struct Conditioning {
    ConditioningEmbedding<Scalar> embedding;
    std::optional<ConditioningEmbedding<Scalar>> unconditional;
    Scalar guidance_scale = Scalar(1);
};

template <typename Scalar>
Scalar relative_error(const LatentTensor<Scalar>& actual, const LatentTensor<Scalar>& expected) {
    const Scalar denom = expected.values().matrix().norm();
    const Scalar diff = (actual.values() - expected.values()).matrix().norm();
    return denom == Scalar(0) ? diff : diff / denom;
}

}  // namespace otf
