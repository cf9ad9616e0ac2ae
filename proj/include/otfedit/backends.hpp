// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "otfedit/image.hpp"
#include "otfedit/scheduler.hpp"
#include "otfedit/tensor.hpp"

namespace otf {

//
// Model roles used by the editing pipeline. Real adapters are exclusive
// resources (one call in flight per instance); the fakes are pure.
//

struct EmbeddingShape {
    int tokens = 0;
    int width = 0;

    bool operator==(const EmbeddingShape&) const = default;
};

struct DecodingParams {
    int max_new_tokens = 256;
    double temperature = 0.0;
    std::vector<std::string> stop_sequences{"Instruct:"};
    std::uint64_t rng_seed = 0;

    void validate() const;
};

class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::string caption(const Image& image) = 0;
    virtual std::string identifier() const = 0;
};

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual ConditioningEmbedding<float> encode(std::string_view text) = 0;
    virtual EmbeddingShape shape() const = 0;
    virtual std::string identifier() const = 0;
};

class LanguageModel {
public:
    virtual ~LanguageModel() = default;
    // Continuation of `prompt` (the prompt itself is not echoed).
    virtual std::string complete(std::string_view prompt, const DecodingParams& params) = 0;
    virtual std::string identifier() const = 0;
};

class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual LatentTensor<float> encode(const Image& image) = 0;
    virtual Image decode(const LatentTensor<float>& latent) = 0;
    // Square input size the codec expects; pipeline resizes to it.
    virtual int native_resolution() const = 0;
    virtual std::string identifier() const = 0;
};

class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;

    virtual LatentTensor<float> predict_conditional(const LatentTensor<float>& latent, int timestep,
                                                    const ConditioningEmbedding<float>& embedding) = 0;
    virtual TrainingSchedule training_schedule() const = 0;
    virtual std::string identifier() const = 0;

    // Classifier-free guidance: eps_u + scale * (eps_c - eps_u) when an
    // unconditional embedding is supplied and scale != 1.
    LatentTensor<float> predict(const LatentTensor<float>& latent, int timestep, const Conditioning<float>& cond);
};

// Image-text embedder used only for scoring edited images.
class EvalEmbedder {
public:
    virtual ~EvalEmbedder() = default;
    virtual Eigen::VectorXd embed_image(const Image& image) = 0;
    virtual Eigen::VectorXd embed_text(std::string_view text) = 0;
    virtual std::string identifier() const = 0;
    // Human-readable description of resizing/cropping before embedding.
    virtual std::string preprocessing() const = 0;
};

struct BackendSuite {
    std::shared_ptr<Captioner> captioner;
    std::shared_ptr<TextEncoder> text_encoder;
    std::shared_ptr<LanguageModel> language_model;
    std::shared_ptr<LatentCodec> latent_codec;
    std::shared_ptr<NoisePredictor> noise_predictor;

    void validate() const;
    nlohmann::json identifiers() const;
};

}  // namespace otf
