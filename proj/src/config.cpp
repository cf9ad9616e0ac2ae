// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "otfedit/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "otfedit/error.hpp"

#ifndef OTFEDIT_DEFAULT_POOL
#define OTFEDIT_DEFAULT_POOL "data/fewshot_pool.jsonl"
#endif

namespace otf {

namespace {

FakeNoiseConfig::Family family_from_string(const std::string& s) {
    if (s == "constant") return FakeNoiseConfig::Family::constant;
    if (s == "linear") return FakeNoiseConfig::Family::linear;
    if (s == "conditioned") return FakeNoiseConfig::Family::conditioned;
    throw ConfigError("unknown fake.noise.family '" + s + "'");
}

std::string to_string(FakeNoiseConfig::Family f) {
    switch (f) {
        case FakeNoiseConfig::Family::constant: return "constant";
        case FakeNoiseConfig::Family::linear: return "linear";
        case FakeNoiseConfig::Family::conditioned: return "conditioned";
    }
    return "conditioned";
}

}  // namespace

nlohmann::json default_config_json() {
    AppConfig c;
    c.remote.models = {"CompVis/stable-diffusion-v1-4", "Salesforce/blip-image-captioning-base",
                       "openai/clip-vit-large-patch14", "microsoft/phi-2", "openai/clip-vit-base-patch32"};
    c.few_shot_pool = OTFEDIT_DEFAULT_POOL;
    return config_to_json(c);
}

void check_known_keys(const nlohmann::json& patch, const nlohmann::json& reference, const std::string& where) {
    if (!patch.is_object()) {
        throw ConfigError("config" + (where.empty() ? std::string() : " key '" + where + "'") + " must be an object");
    }
    for (const auto& [key, value] : patch.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!reference.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        const auto& ref = reference.at(key);
        if (ref.is_object() && !value.is_null()) check_known_keys(value, ref, path);
    }
}

nlohmann::json resolve_config_json(const std::optional<nlohmann::json>& file, const nlohmann::json& flags) {
    auto resolved = default_config_json();
    const auto reference = resolved;
    if (file) {
        check_known_keys(*file, reference);
        resolved.merge_patch(*file);
    }
    if (!flags.is_null()) {
        check_known_keys(flags, reference);
        resolved.merge_patch(flags);
    }
    return resolved;
}

nlohmann::json config_to_json(const AppConfig& c) {
    const auto& m = c.remote.models;
    return {{"models",
             {{"diffusion", m.diffusion},
              {"captioner", m.captioner},
              {"text_encoder", m.text_encoder},
              {"language_model", m.language_model},
              {"evaluator", m.evaluator}}},
            {"model_host", {{"url", c.remote.url}, {"timeout_seconds", c.remote.timeout_seconds}}},
            {"device", c.device},
            {"precision", c.precision},
            {"edit", c.edit},
            {"few_shot_pool", c.few_shot_pool.string()},
            {"fake",
             {{"resolution", c.fake.resolution},
              {"context_length", c.fake.embedding.tokens},
              {"width", c.fake.embedding.width},
              {"noise",
               {{"family", to_string(c.fake.noise.family)},
                {"constant", c.fake.noise.constant},
                {"k", c.fake.noise.k},
                {"conditioning_scale", c.fake.noise.conditioning_scale},
                {"seed", c.fake.noise.seed}}}}},
            {"service", {{"host", c.service.host}, {"port", c.service.port}}}};
}

AppConfig config_from_json(const nlohmann::json& j) {
    check_known_keys(j, default_config_json());
    AppConfig c;
    try {
        const auto& m = j.at("models");
        c.remote.models = {m.at("diffusion").get<std::string>(), m.at("captioner").get<std::string>(),
                           m.at("text_encoder").get<std::string>(), m.at("language_model").get<std::string>(),
                           m.at("evaluator").get<std::string>()};
        c.remote.url = j.at("model_host").at("url").get<std::string>();
        c.remote.timeout_seconds = j.at("model_host").at("timeout_seconds").get<double>();
        c.device = j.at("device").get<std::string>();
        c.precision = j.at("precision").get<std::string>();
        c.edit = j.at("edit").get<EditConfig>();
        c.few_shot_pool = j.at("few_shot_pool").get<std::string>();
        const auto& f = j.at("fake");
        c.fake.resolution = f.at("resolution").get<int>();
        c.fake.embedding = {f.at("context_length").get<int>(), f.at("width").get<int>()};
        const auto& n = f.at("noise");
        c.fake.noise.family = family_from_string(n.at("family").get<std::string>());
        c.fake.noise.constant = n.at("constant").get<float>();
        c.fake.noise.k = n.at("k").get<float>();
        c.fake.noise.conditioning_scale = n.at("conditioning_scale").get<float>();
        c.fake.noise.seed = n.at("seed").get<std::uint64_t>();
        c.service.host = j.at("service").at("host").get<std::string>();
        c.service.port = j.at("service").at("port").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.remote.timeout_seconds <= 0) throw ConfigError("model_host.timeout_seconds must be positive");
    if (c.fake.resolution < 8 || c.fake.resolution % FakeLatentCodec::kDownscale != 0) {
        throw ConfigError("fake.resolution must be a positive multiple of 8");
    }
    if (c.service.port < 0 || c.service.port > 65535) throw ConfigError("service.port out of range");
    return c;
}

nlohmann::json read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return nlohmann::json::parse(buffer.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
}

std::optional<std::filesystem::path> config_path(const std::optional<std::filesystem::path>& explicit_path) {
    if (explicit_path) return explicit_path;
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) return std::filesystem::path(env);
    return std::nullopt;
}

BackendSuite make_suite(const AppConfig& config, bool fake) {
    if (fake) return make_fake_suite(config.fake);
    return load_remote_suite(config.remote);
}

std::shared_ptr<EvalEmbedder> make_evaluator(const AppConfig& config, bool fake) {
    if (fake) return std::make_shared<FakeEvalEmbedder>();
    return load_eval_embedder(std::make_shared<ModelHostClient>(config.remote));
}

}  // namespace otf
