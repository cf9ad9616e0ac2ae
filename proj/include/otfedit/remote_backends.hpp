// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>

#include "json.hpp"
#include "otfedit/backends.hpp"

namespace otf {

//
// Adapters for checkpoints served by a model host process over HTTP/JSON
// (see docs/model_host_protocol.md). The host owns the weights and device;
// these classes validate what it serves against the configured checkpoint
// identifiers and translate tensors and images on the wire.
//

struct ModelIdentifiers {
    std::string diffusion;
    std::string captioner;
    std::string text_encoder;
    std::string language_model;
    std::string evaluator;
};

struct RemoteOptions {
    std::string url = "http://127.0.0.1:8765";
    ModelIdentifiers models;
    double timeout_seconds = 600.0;
};

class ModelHostClient {
public:
    explicit ModelHostClient(RemoteOptions options);
    ~ModelHostClient();

    // Cached GET /info; throws LoadError("model_host") when unreachable.
    const nlohmann::json& info();

    // One request at a time per client; non-200 answers become BackendError(component).
    nlohmann::json post(const std::string& path, const nlohmann::json& body, const std::string& component);

    const RemoteOptions& options() const { return options_; }

private:
    struct Impl;
    RemoteOptions options_;
    std::unique_ptr<Impl> impl_;
    std::mutex mutex_;
    std::optional<nlohmann::json> info_;
};

nlohmann::json tensor_to_json(const float* data, std::span<const std::uint64_t> dims);
ConditioningEmbedding<float> embedding_from_json(const nlohmann::json& j);
LatentTensor<float> latent_from_json(const nlohmann::json& j);
nlohmann::json latent_to_json(const LatentTensor<float>& latent);
nlohmann::json embedding_to_json(const ConditioningEmbedding<float>& embedding);

std::shared_ptr<Captioner> load_captioner(const std::shared_ptr<ModelHostClient>& host);
std::shared_ptr<TextEncoder> load_text_encoder(const std::shared_ptr<ModelHostClient>& host);
std::shared_ptr<LanguageModel> load_language_model(const std::shared_ptr<ModelHostClient>& host);

struct DiffusionBackends {
    std::shared_ptr<LatentCodec> codec;
    std::shared_ptr<NoisePredictor> predictor;
};
DiffusionBackends load_diffusion(const std::shared_ptr<ModelHostClient>& host);

std::shared_ptr<EvalEmbedder> load_eval_embedder(const std::shared_ptr<ModelHostClient>& host);

BackendSuite load_remote_suite(const RemoteOptions& options);

}  // namespace otf
