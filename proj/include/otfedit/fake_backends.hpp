// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "otfedit/backends.hpp"

namespace otf {

//
// Deterministic stand-ins for every model role. Each is a pure function of
// its inputs and seed, so whole-pipeline runs replay bit for bit.
//

// Names the dominant colour of the image.
class FakeCaptioner final : public Captioner {
public:
    std::string caption(const Image& image) override;
    std::string identifier() const override { return "fake-captioner"; }

    int calls() const { return calls_.load(); }

private:
    std::atomic<int> calls_{0};
};

// Causal hash encoder: row i depends on the first i whitespace tokens, the
// end-of-text and padding rows on the whole text.
class FakeTextEncoder final : public TextEncoder {
public:
    explicit FakeTextEncoder(EmbeddingShape shape = {77, 768}, std::uint64_t seed = 0);

    ConditioningEmbedding<float> encode(std::string_view text) override;
    EmbeddingShape shape() const override { return shape_; }
    std::string identifier() const override;

private:
    EmbeddingShape shape_;
    std::uint64_t seed_;
};

// Reads the transformation and caption count back out of the live
// instruction and answers in the expected output format.
class FakeLanguageModel final : public LanguageModel {
public:
    std::string complete(std::string_view prompt, const DecodingParams& params) override;
    std::string identifier() const override { return "fake-language-model"; }

    int calls() const { return calls_.load(); }

private:
    std::atomic<int> calls_{0};
};

// 8x block-mean codec with four latent channels (RGB plus luminance).
class FakeLatentCodec final : public LatentCodec {
public:
    static constexpr int kDownscale = 8;
    static constexpr int kChannels = 4;

    explicit FakeLatentCodec(int native_resolution = 512) : resolution_(native_resolution) {}

    LatentTensor<float> encode(const Image& image) override;
    Image decode(const LatentTensor<float>& latent) override;
    int native_resolution() const override { return resolution_; }
    std::string identifier() const override { return "fake-latent-codec/" + std::to_string(resolution_); }

private:
    int resolution_;
};

struct FakeNoiseConfig {
    enum class Family { constant, linear, conditioned };

    Family family = Family::conditioned;
    float constant = 0.0f;            // constant family: eps = c
    float k = 0.05f;                  // linear/conditioned: eps = k * x (+ projection)
    float conditioning_scale = 0.5f;  // conditioned: weight of the conditioning projection
    std::uint64_t seed = 0;
};

class FakeNoisePredictor final : public NoisePredictor {
public:
    explicit FakeNoisePredictor(FakeNoiseConfig config = {});

    LatentTensor<float> predict_conditional(const LatentTensor<float>& latent, int timestep,
                                            const ConditioningEmbedding<float>& embedding) override;
    TrainingSchedule training_schedule() const override;
    std::string identifier() const override;

    const FakeNoiseConfig& config() const { return config_; }

private:
    float project(const ConditioningEmbedding<float>& embedding, int channel) const;

    FakeNoiseConfig config_;
};

// Colour-layout image features and hashed bag-of-words text features.
class FakeEvalEmbedder final : public EvalEmbedder {
public:
    static constexpr int kDim = 48;

    Eigen::VectorXd embed_image(const Image& image) override;
    Eigen::VectorXd embed_text(std::string_view text) override;
    std::string identifier() const override { return "fake-eval-embedder"; }
    std::string preprocessing() const override { return "4x4 block colour means, no resize"; }
};

struct FakeSuiteOptions {
    EmbeddingShape embedding{77, 768};
    int resolution = 512;
    FakeNoiseConfig noise{};
};

BackendSuite make_fake_suite(const FakeSuiteOptions& options = {});

// Uniform double in [0, 1) from the top 53 bits; portable across standard libraries.
inline double unit_double(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace otf
