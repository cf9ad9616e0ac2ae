// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "otfedit/backends.hpp"

#include "otfedit/error.hpp"

namespace otf {

void DecodingParams::validate() const {
    if (max_new_tokens <= 0) throw ConfigError("decoding.max_new_tokens must be positive");
    if (!(temperature >= 0.0)) throw ConfigError("decoding.temperature must be non-negative");
}

LatentTensor<float> NoisePredictor::predict(const LatentTensor<float>& latent, int timestep,
                                            const Conditioning<float>& cond) {
    auto eps = predict_conditional(latent, timestep, cond.embedding);
    if (!cond.unconditional || cond.guidance_scale == 1.0f) return eps;
    const auto eps_u = predict_conditional(latent, timestep, *cond.unconditional);
    typename LatentTensor<float>::Storage guided =
        eps_u.values() + cond.guidance_scale * (eps.values() - eps_u.values());
    return LatentTensor<float>(latent.shape(), std::move(guided));
}

void BackendSuite::validate() const {
    if (!captioner) throw LoadError("captioner", "not loaded");
    if (!text_encoder) throw LoadError("text_encoder", "not loaded");
    if (!language_model) throw LoadError("language_model", "not loaded");
    if (!latent_codec) throw LoadError("latent_codec", "not loaded");
    if (!noise_predictor) throw LoadError("noise_predictor", "not loaded");
}

nlohmann::json BackendSuite::identifiers() const {
    nlohmann::json j;
    j["captioner"] = captioner ? captioner->identifier() : "";
    j["text_encoder"] = text_encoder ? text_encoder->identifier() : "";
    j["language_model"] = language_model ? language_model->identifier() : "";
    j["latent_codec"] = latent_codec ? latent_codec->identifier() : "";
    j["noise_predictor"] = noise_predictor ? noise_predictor->identifier() : "";
    return j;
}

}  // namespace otf
