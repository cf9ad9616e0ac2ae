// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "otfedit/remote_backends.hpp"

#include "httplib.h"
#include "otfedit/encoding.hpp"
#include "otfedit/error.hpp"
#include "otfedit/tensor_io.hpp"

namespace otf {

namespace {

using nlohmann::json;

// Verifies the host serves the configured checkpoint for a role and returns its /info record.
const json& role_info(ModelHostClient& host, const std::string& role, const std::string& expected) {
    const auto& info = host.info();
    if (!info.contains("models") || !info["models"].contains(role)) {
        throw LoadError(role, "model host at " + host.options().url + " does not serve this role");
    }
    const auto served = info["models"][role].get<std::string>();
    if (!expected.empty() && served != expected) {
        throw LoadError(role, "model host serves '" + served + "' but configuration expects '" + expected + "'");
    }
    return info;
}

std::string served_id(ModelHostClient& host, const std::string& role) {
    return host.info()["models"][role].get<std::string>();
}

class RemoteCaptioner final : public Captioner {
public:
    explicit RemoteCaptioner(std::shared_ptr<ModelHostClient> host) : host_(std::move(host)) {}

    std::string caption(const Image& image) override {
        const auto reply = host_->post("/caption", {{"image", base64_encode(encode_png(image))}}, "captioner");
        auto text = reply.at("text").get<std::string>();
        if (text.empty()) throw BackendError("captioner", "model host returned an empty caption");
        return text;
    }
    std::string identifier() const override { return served_id(*host_, "captioner"); }

private:
    std::shared_ptr<ModelHostClient> host_;
};

class RemoteTextEncoder final : public TextEncoder {
public:
    RemoteTextEncoder(std::shared_ptr<ModelHostClient> host, EmbeddingShape shape)
        : host_(std::move(host)), shape_(shape) {}

    ConditioningEmbedding<float> encode(std::string_view text) override {
        const auto reply = host_->post("/encode_text", {{"text", std::string(text)}}, "text_encoder");
        auto embedding = embedding_from_json(reply.at("tensor"));
        if (embedding.rows() != shape_.tokens || embedding.cols() != shape_.width) {
            throw BackendError("text_encoder", "embedding shape differs from the declared " +
                                                   std::to_string(shape_.tokens) + "x" + std::to_string(shape_.width));
        }
        return embedding;
    }
    EmbeddingShape shape() const override { return shape_; }
    std::string identifier() const override { return served_id(*host_, "text_encoder"); }

private:
    std::shared_ptr<ModelHostClient> host_;
    EmbeddingShape shape_;
};

class RemoteLanguageModel final : public LanguageModel {
public:
    explicit RemoteLanguageModel(std::shared_ptr<ModelHostClient> host) : host_(std::move(host)) {}

    std::string complete(std::string_view prompt, const DecodingParams& params) override {
        params.validate();
        const json body{{"prompt", std::string(prompt)},
                        {"max_new_tokens", params.max_new_tokens},
                        {"temperature", params.temperature},
                        {"stop", params.stop_sequences},
                        {"seed", params.rng_seed}};
        return host_->post("/complete", body, "language_model").at("text").get<std::string>();
    }
    std::string identifier() const override { return served_id(*host_, "language_model"); }

private:
    std::shared_ptr<ModelHostClient> host_;
};

class RemoteLatentCodec final : public LatentCodec {
public:
    RemoteLatentCodec(std::shared_ptr<ModelHostClient> host, int resolution)
        : host_(std::move(host)), resolution_(resolution) {}

    LatentTensor<float> encode(const Image& image) override {
        const auto reply = host_->post("/vae/encode", {{"image", base64_encode(encode_png(image))}}, "latent_codec");
        return latent_from_json(reply.at("tensor"));
    }
    Image decode(const LatentTensor<float>& latent) override {
        const auto reply = host_->post("/vae/decode", {{"tensor", latent_to_json(latent)}}, "latent_codec");
        return decode_png(base64_decode(reply.at("image").get<std::string>()));
    }
    int native_resolution() const override { return resolution_; }
    std::string identifier() const override { return served_id(*host_, "diffusion") + ":vae"; }

private:
    std::shared_ptr<ModelHostClient> host_;
    int resolution_;
};

class RemoteNoisePredictor final : public NoisePredictor {
public:
    RemoteNoisePredictor(std::shared_ptr<ModelHostClient> host, TrainingSchedule schedule)
        : host_(std::move(host)), schedule_(std::move(schedule)) {}

    LatentTensor<float> predict_conditional(const LatentTensor<float>& latent, int timestep,
                                            const ConditioningEmbedding<float>& embedding) override {
        const json body{{"latent", latent_to_json(latent)},
                        {"timestep", timestep},
                        {"embedding", embedding_to_json(embedding)}};
        auto eps = latent_from_json(host_->post("/unet", body, "noise_predictor").at("tensor"));
        if (!(eps.shape() == latent.shape())) throw BackendError("noise_predictor", "epsilon shape mismatch");
        return eps;
    }
    TrainingSchedule training_schedule() const override { return schedule_; }
    std::string identifier() const override { return served_id(*host_, "diffusion") + ":unet"; }

private:
    std::shared_ptr<ModelHostClient> host_;
    TrainingSchedule schedule_;
};

class RemoteEvalEmbedder final : public EvalEmbedder {
public:
    RemoteEvalEmbedder(std::shared_ptr<ModelHostClient> host, std::string preprocessing)
        : host_(std::move(host)), preprocessing_(std::move(preprocessing)) {}

    Eigen::VectorXd embed_image(const Image& image) override {
        return to_vector(host_->post("/eval/image", {{"image", base64_encode(encode_png(image))}}, "evaluator"));
    }
    Eigen::VectorXd embed_text(std::string_view text) override {
        return to_vector(host_->post("/eval/text", {{"text", std::string(text)}}, "evaluator"));
    }
    std::string identifier() const override { return served_id(*host_, "evaluator"); }
    std::string preprocessing() const override { return preprocessing_; }

private:
    static Eigen::VectorXd to_vector(const json& reply) {
        const auto values = reply.at("vector").get<std::vector<double>>();
        return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    }

    std::shared_ptr<ModelHostClient> host_;
    std::string preprocessing_;
};

}  // namespace

// ---------------------------------------------------------------------------

struct ModelHostClient::Impl {
    explicit Impl(const RemoteOptions& options) : client(options.url) {
        const auto seconds = static_cast<time_t>(options.timeout_seconds);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(seconds, 0);
        client.set_write_timeout(seconds, 0);
    }
    httplib::Client client;
};

ModelHostClient::ModelHostClient(RemoteOptions options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>(options_)) {}

ModelHostClient::~ModelHostClient() = default;

const nlohmann::json& ModelHostClient::info() {
    std::lock_guard lock(mutex_);
    if (!info_) {
        auto res = impl_->client.Get("/info");
        if (!res) {
            throw LoadError("model_host", "cannot reach " + options_.url + " (" + httplib::to_string(res.error()) + ")");
        }
        if (res->status != 200) {
            throw LoadError("model_host", "GET /info answered HTTP " + std::to_string(res->status));
        }
        try {
            info_ = nlohmann::json::parse(res->body);
        } catch (const std::exception& e) {
            throw LoadError("model_host", std::string("malformed /info: ") + e.what());
        }
    }
    return *info_;
}

nlohmann::json ModelHostClient::post(const std::string& path, const nlohmann::json& body,
                                     const std::string& component) {
    std::lock_guard lock(mutex_);
    auto res = impl_->client.Post(path, body.dump(), "application/json");
    if (!res) throw BackendError(component, "request to " + path + " failed: " + httplib::to_string(res.error()));
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(res->body);
    } catch (const std::exception&) {
        throw BackendError(component, path + " answered HTTP " + std::to_string(res->status) + " with a non-JSON body");
    }
    if (res->status != 200) {
        throw BackendError(component, path + " answered HTTP " + std::to_string(res->status) + ": " +
                                          reply.value("error", std::string("unknown error")));
    }
    return reply;
}

// ---------------------------------------------------------------------------

nlohmann::json tensor_to_json(const float* data, std::span<const std::uint64_t> dims) {
    std::uint64_t count = 1;
    for (auto d : dims) count *= d;
    const std::string_view bytes(reinterpret_cast<const char*>(data), count * sizeof(float));
    return {{"shape", std::vector<std::uint64_t>(dims.begin(), dims.end())}, {"data", base64_encode(bytes)}};
}

namespace {

TensorFile tensor_from_json(const nlohmann::json& j) {
    TensorFile t;
    t.dims = j.at("shape").get<std::vector<std::uint64_t>>();
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    std::uint64_t count = 1;
    for (auto d : t.dims) count *= d;
    if (bytes.size() != count * sizeof(float)) throw ShapeError("tensor payload does not match its shape");
    t.values.resize(count);
    std::memcpy(t.values.data(), bytes.data(), bytes.size());
    return t;
}

}  // namespace

ConditioningEmbedding<float> embedding_from_json(const nlohmann::json& j) {
    auto t = tensor_from_json(j);
    if (t.dims.size() == 3 && t.dims[0] == 1) t.dims.erase(t.dims.begin());
    if (t.dims.size() != 2) throw ShapeError("embedding tensor must be rank 2");
    ConditioningEmbedding<float> m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
    std::copy(t.values.begin(), t.values.end(), m.data());
    return m;
}

LatentTensor<float> latent_from_json(const nlohmann::json& j) {
    auto t = tensor_from_json(j);
    if (t.dims.size() == 4 && t.dims[0] == 1) t.dims.erase(t.dims.begin());
    return latent_from_tensor_file(t);
}

nlohmann::json latent_to_json(const LatentTensor<float>& latent) {
    const auto& s = latent.shape();
    const std::uint64_t dims[] = {static_cast<std::uint64_t>(s.channels), static_cast<std::uint64_t>(s.height),
                                  static_cast<std::uint64_t>(s.width)};
    return tensor_to_json(latent.values().data(), dims);
}

nlohmann::json embedding_to_json(const ConditioningEmbedding<float>& embedding) {
    const std::uint64_t dims[] = {static_cast<std::uint64_t>(embedding.rows()),
                                  static_cast<std::uint64_t>(embedding.cols())};
    return tensor_to_json(embedding.data(), dims);
}

// ---------------------------------------------------------------------------

std::shared_ptr<Captioner> load_captioner(const std::shared_ptr<ModelHostClient>& host) {
    role_info(*host, "captioner", host->options().models.captioner);
    return std::make_shared<RemoteCaptioner>(host);
}

std::shared_ptr<TextEncoder> load_text_encoder(const std::shared_ptr<ModelHostClient>& host) {
    const auto& info = role_info(*host, "text_encoder", host->options().models.text_encoder);
    try {
        const EmbeddingShape shape{info.at("text_encoder").at("context_length").get<int>(),
                                   info.at("text_encoder").at("width").get<int>()};
        if (shape.tokens <= 0 || shape.width <= 0) throw ShapeError("non-positive dimensions");
        return std::make_shared<RemoteTextEncoder>(host, shape);
    } catch (const std::exception& e) {
        throw LoadError("text_encoder", std::string("incompatible shape metadata: ") + e.what());
    }
}

std::shared_ptr<LanguageModel> load_language_model(const std::shared_ptr<ModelHostClient>& host) {
    role_info(*host, "language_model", host->options().models.language_model);
    return std::make_shared<RemoteLanguageModel>(host);
}

DiffusionBackends load_diffusion(const std::shared_ptr<ModelHostClient>& host) {
    const auto& info = role_info(*host, "diffusion", host->options().models.diffusion);
    try {
        const auto& d = info.at("diffusion");
        TrainingSchedule schedule{d.at("alphas_cumprod").get<std::vector<double>>(), d.value("steps_offset", 1),
                                  d.value("set_alpha_to_one", false)};
        make_schedule(schedule, 1);  // validates the published coefficients
        const int resolution = d.at("resolution").get<int>();
        if (resolution <= 0) throw ShapeError("non-positive resolution");
        return {std::make_shared<RemoteLatentCodec>(host, resolution),
                std::make_shared<RemoteNoisePredictor>(host, std::move(schedule))};
    } catch (const LoadError&) {
        throw;
    } catch (const std::exception& e) {
        throw LoadError("diffusion", std::string("incompatible schedule metadata: ") + e.what());
    }
}

std::shared_ptr<EvalEmbedder> load_eval_embedder(const std::shared_ptr<ModelHostClient>& host) {
    const auto& info = role_info(*host, "evaluator", host->options().models.evaluator);
    std::string preprocessing = "host default";
    if (info.contains("evaluator")) preprocessing = info["evaluator"].value("preprocessing", preprocessing);
    return std::make_shared<RemoteEvalEmbedder>(host, preprocessing);
}

BackendSuite load_remote_suite(const RemoteOptions& options) {
    auto host = std::make_shared<ModelHostClient>(options);
    BackendSuite suite;
    suite.captioner = load_captioner(host);
    suite.text_encoder = load_text_encoder(host);
    suite.language_model = load_language_model(host);
    auto diffusion = load_diffusion(host);
    suite.latent_codec = diffusion.codec;
    suite.noise_predictor = diffusion.predictor;
    return suite;
}

}  // namespace otf
