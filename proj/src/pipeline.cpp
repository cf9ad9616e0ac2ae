// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "otfedit/pipeline.hpp"

#include <cmath>
#include <set>

#include "otfedit/encoding.hpp"
#include "otfedit/error.hpp"

namespace otf {

namespace {

template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

bool blank(std::string_view text) {
    return text.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

void validate_request(const EditConfig& config, std::size_t pool_size) {
    config.validate();
    if (static_cast<std::size_t>(config.shots) > pool_size) {
        throw ConfigError("few-shot pool has " + std::to_string(pool_size) + " entries, " +
                          std::to_string(config.shots) + " shots requested");
    }
}

nlohmann::json image_record(const Image& image) {
    return {{"width", image.width}, {"height", image.height}, {"sha256", image_digest(image)}};
}

}  // namespace

std::string image_digest(const Image& image) {
    std::string bytes = std::to_string(image.width) + "x" + std::to_string(image.height) + ":";
    bytes.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
    return sha256_hex(bytes);
}

std::string_view to_string(LockInMode mode) {
    switch (mode) {
        case LockInMode::none: return "none";
        case LockInMode::generated_caption: return "generated_caption";
        case LockInMode::user_caption: return "user_caption";
    }
    return "none";
}

LockInMode lock_in_mode_from_string(std::string_view text) {
    if (text == "none") return LockInMode::none;
    if (text == "generated_caption") return LockInMode::generated_caption;
    if (text == "user_caption") return LockInMode::user_caption;
    throw ConfigError("unknown lock_in_mode '" + std::string(text) + "'");
}

std::string_view to_string(ParseFailurePolicy policy) {
    return policy == ParseFailurePolicy::fallback ? "fallback" : "error";
}

ParseFailurePolicy parse_failure_policy_from_string(std::string_view text) {
    if (text == "fallback") return ParseFailurePolicy::fallback;
    if (text == "error") return ParseFailurePolicy::error;
    throw ConfigError("unknown on_parse_failure '" + std::string(text) + "'");
}

void EditConfig::validate() const {
    if (!valid_caption_count(n_captions)) throw ConfigError("n_captions must be 1, 2 or 4");
    if (!valid_shot_count(shots)) throw ConfigError("shots must be 0, 1 or 3");
    const bool has_caption = user_caption.has_value();
    if ((lock_in_mode == LockInMode::user_caption) != has_caption) {
        throw ConfigError("user_caption is required exactly when lock_in_mode is user_caption");
    }
    if (has_caption && blank(*user_caption)) throw ConfigError("user_caption is empty");
    if (ddim_steps < 1 || ddim_steps > 1000) throw ConfigError("ddim_steps must be in [1, 1000]");
    if (!std::isfinite(direction_strength)) throw ConfigError("direction_strength must be finite");
    if (retry_limit < 1 || retry_limit > 16) throw ConfigError("retry_limit must be in [1, 16]");
    if (!std::isfinite(guidance_scale) || guidance_scale < 0) throw ConfigError("guidance_scale must be >= 0");
    if (!std::isfinite(inversion_guidance_scale) || inversion_guidance_scale < 0) {
        throw ConfigError("inversion_guidance_scale must be >= 0");
    }
    decoding(rng_seed).validate();
}

DecodingParams EditConfig::decoding(std::uint64_t seed) const {
    DecodingParams p;
    p.max_new_tokens = max_new_tokens;
    p.temperature = temperature;
    p.rng_seed = seed;
    return p;
}

void to_json(nlohmann::json& j, const EditConfig& c) {
    j = {{"n_captions", c.n_captions},
         {"shots", c.shots},
         {"prompt_style", to_string(c.prompt_style)},
         {"lock_in_mode", to_string(c.lock_in_mode)},
         {"user_caption", c.user_caption ? nlohmann::json(*c.user_caption) : nlohmann::json(nullptr)},
         {"ddim_steps", c.ddim_steps},
         {"direction_strength", c.direction_strength},
         {"rng_seed", c.rng_seed},
         {"retry_limit", c.retry_limit},
         {"guidance_scale", c.guidance_scale},
         {"inversion_guidance_scale", c.inversion_guidance_scale},
         {"max_new_tokens", c.max_new_tokens},
         {"temperature", c.temperature},
         {"on_parse_failure", to_string(c.on_parse_failure)},
         {"reconstruct", c.reconstruct}};
}

void from_json(const nlohmann::json& j, EditConfig& c) {
    if (!j.is_object()) throw ConfigError("edit config must be a JSON object");
    static const std::set<std::string> known{"n_captions",     "shots",          "prompt_style",
                                             "lock_in_mode",   "user_caption",   "ddim_steps",
                                             "direction_strength", "rng_seed",   "retry_limit",
                                             "guidance_scale", "inversion_guidance_scale", "max_new_tokens",
                                             "temperature",    "on_parse_failure", "reconstruct"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown edit config key '" + key + "'");
    }
    try {
        if (j.contains("n_captions")) c.n_captions = j.at("n_captions").get<int>();
        if (j.contains("shots")) c.shots = j.at("shots").get<int>();
        if (j.contains("prompt_style")) {
            try {
                c.prompt_style = prompt_style_from_string(j.at("prompt_style").get<std::string>());
            } catch (const ConfigError&) {
                throw;
            } catch (const Error& e) {
                throw ConfigError(e.what());
            }
        }
        if (j.contains("lock_in_mode")) c.lock_in_mode = lock_in_mode_from_string(j.at("lock_in_mode").get<std::string>());
        if (j.contains("user_caption")) {
            const auto& u = j.at("user_caption");
            c.user_caption = u.is_null() ? std::nullopt : std::optional<std::string>(u.get<std::string>());
        }
        if (j.contains("ddim_steps")) c.ddim_steps = j.at("ddim_steps").get<int>();
        if (j.contains("direction_strength")) c.direction_strength = j.at("direction_strength").get<double>();
        if (j.contains("rng_seed")) c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        if (j.contains("retry_limit")) c.retry_limit = j.at("retry_limit").get<int>();
        if (j.contains("guidance_scale")) c.guidance_scale = j.at("guidance_scale").get<double>();
        if (j.contains("inversion_guidance_scale")) {
            c.inversion_guidance_scale = j.at("inversion_guidance_scale").get<double>();
        }
        if (j.contains("max_new_tokens")) c.max_new_tokens = j.at("max_new_tokens").get<int>();
        if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
        if (j.contains("on_parse_failure")) {
            c.on_parse_failure = parse_failure_policy_from_string(j.at("on_parse_failure").get<std::string>());
        }
        if (j.contains("reconstruct")) c.reconstruct = j.at("reconstruct").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("edit config: ") + e.what());
    }
}

std::string knob_label(const EditConfig& c) {
    std::string lock = "nolock";
    if (c.lock_in_mode == LockInMode::generated_caption) lock = "lock";
    if (c.lock_in_mode == LockInMode::user_caption) lock = "oracle";
    return std::to_string(c.shots) + "shot-" + std::to_string(c.n_captions) + "cap-" + lock;
}

std::string fingerprint(const EditConfig& c) { return knob_label(c) + "-" + std::string(to_string(c.prompt_style)); }

// ---------------------------------------------------------------------------

Pipeline::Pipeline(BackendSuite suite, std::vector<FewShotExample> pool)
    : suite_(std::move(suite)), pool_(std::move(pool)) {
    suite_.validate();
    for (const auto& entry : pool_) validate_pool_entry(entry);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : pool_) {
        j.push_back({{"transformation", e.transformation},
                     {"before_captions", e.before_captions},
                     {"after_captions", e.after_captions}});
    }
    pool_digest_ = sha256_hex(j.dump());
}

void Pipeline::set_attention_guidance(std::shared_ptr<AttentionGuidanceHook> hook) {
    std::lock_guard lock(mutex_);
    attention_ = std::move(hook);
}

Pipeline::Inverted Pipeline::step_invert(const Image& image, const std::optional<std::string>& caption,
                                         const EditConfig& config) {
    Inverted inv;
    inv.original = image;
    inv.caption = caption ? *caption : in_stage("captioning", [&] { return suite_.captioner->caption(image); });

    in_stage("inversion", [&] {
        const int res = suite_.latent_codec->native_resolution();
        inv.prepared = (image.width == res && image.height == res) ? image : resize_bilinear(image, res, res);
        inv.caption_embedding = suite_.text_encoder->encode(inv.caption);
        inv.unconditional = suite_.text_encoder->encode("");
        const auto schedule = make_schedule<float>(suite_.noise_predictor->training_schedule(), config.ddim_steps);
        LatentState<float> clean{suite_.latent_codec->encode(inv.prepared), 0};
        const Conditioning<float> cond{inv.caption_embedding, inv.unconditional,
                                       static_cast<float>(config.inversion_guidance_scale)};
        auto predictor = [this](const LatentTensor<float>& x, int t, const Conditioning<float>& c) {
            return suite_.noise_predictor->predict(x, t, c);
        };
        inv.noise = run_inversion(clean, cond, predictor, schedule).latent;
        return 0;
    });
    return inv;
}

Image Pipeline::sample_and_decode(const Inverted& inv, const ConditioningEmbedding<float>& conditioning,
                                  const EditConfig& config) {
    const auto schedule = make_schedule<float>(suite_.noise_predictor->training_schedule(), config.ddim_steps);
    const Conditioning<float> cond{conditioning, inv.unconditional, static_cast<float>(config.guidance_scale)};
    int step = 0;
    auto predictor = [&](const LatentTensor<float>& x, int t, const Conditioning<float>& c) {
        auto eps = suite_.noise_predictor->predict(x, t, c);
        if (attention_) eps = attention_->guide(step, t, x, eps, c);
        ++step;
        return eps;
    };
    const auto clean = run_sampling(LatentState<float>{inv.noise, schedule.max_timestep()}, cond, predictor, schedule);
    auto image = suite_.latent_codec->decode(clean.latent);
    if (image.width != inv.original.width || image.height != inv.original.height) {
        image = resize_bilinear(image, inv.original.width, inv.original.height);
    }
    return image;
}

DirectionsResult Pipeline::step_directions(const std::string& instruction, const EditConfig& config,
                                           const std::optional<std::string>& step1_caption) {
    std::optional<std::string> lock;
    LockInSource source = LockInSource::none;
    if (config.lock_in_mode == LockInMode::user_caption) {
        lock = config.user_caption;
        source = LockInSource::user_provided;
    } else if (config.lock_in_mode == LockInMode::generated_caption) {
        if (!step1_caption) throw StageError("request", "generated_caption lock-in needs a Step-1 caption");
        lock = step1_caption;
        source = LockInSource::generated_captioner;
    }

    return in_stage("generation", [&] {
        DirectionsResult out;
        std::optional<CaptionBundle> bundle;
        for (int attempt = 0; attempt < config.retry_limit && !bundle; ++attempt) {
            const std::uint64_t seed = config.rng_seed + static_cast<std::uint64_t>(attempt);
            const auto shots = sample_few_shot(pool_, config.shots, config.n_captions, seed);
            out.prompt = build_prompt(instruction, config.n_captions, shots, config.prompt_style, lock);
            out.raw_completion = suite_.language_model->complete(out.prompt, config.decoding(seed));
            nlohmann::json record{{"attempt", attempt}, {"seed", seed}};
            record["shots"] = nlohmann::json::array();
            for (const auto& s : shots) record["shots"].push_back(s.transformation);
            try {
                bundle = parse_captions(out.raw_completion, config.n_captions, lock);
                record["status"] = "ok";
            } catch (const ParseError& e) {
                record["status"] = "parse_error";
                record["error"] = e.what();
            }
            out.attempts.push_back(std::move(record));
        }
        if (!bundle) {
            if (config.on_parse_failure == ParseFailurePolicy::error) {
                throw ParseError("no parseable completion after " + std::to_string(config.retry_limit) + " attempts",
                                 out.raw_completion);
            }
            // Minimal bundle, replicated so the caption-count contract holds.
            const std::string before = lock ? *lock : step1_caption.value_or("");
            bundle = CaptionBundle{std::vector<std::string>(config.n_captions, before),
                                   std::vector<std::string>(config.n_captions, instruction), lock, source};
            out.degraded = true;
        }
        bundle->lock_in_source = source;
        bundle->locked_first_before = lock;

        std::vector<Embedding<float>> before, after;
        for (const auto& c : bundle->before) before.push_back(suite_.text_encoder->encode(c));
        for (const auto& c : bundle->after) after.push_back(suite_.text_encoder->encode(c));
        out.direction = compute_direction(before, after);
        out.bundle = std::move(*bundle);
        return out;
    });
}

DirectionsResult Pipeline::generate_directions(const std::string& instruction, const EditConfig& config,
                                               const std::optional<std::string>& step1_caption) {
    std::lock_guard lock(mutex_);
    in_stage("request", [&] {
        if (blank(instruction)) throw ConfigError("instruction is empty");
        validate_request(config, pool_.size());
        return 0;
    });
    return step_directions(instruction, config, step1_caption);
}

InversionResult Pipeline::invert_only(const Image& image, const std::optional<std::string>& caption,
                                      const EditConfig& config) {
    std::lock_guard lock(mutex_);
    in_stage("request", [&] {
        if (image.empty()) throw ConfigError("image has a zero dimension");
        config.validate();
        return 0;
    });
    auto inv = step_invert(image, caption, config);
    auto reconstruction = in_stage("editing", [&] { return sample_and_decode(inv, inv.caption_embedding, config); });
    return {std::move(inv.noise), std::move(reconstruction), std::move(inv.caption)};
}

EditResult Pipeline::edit(const EditRequest& request) {
    std::lock_guard lock(mutex_);
    const auto& config = request.config;
    in_stage("request", [&] {
        if (blank(request.instruction)) throw ConfigError("instruction is empty");
        if (request.image.empty()) throw ConfigError("image has a zero dimension");
        validate_request(config, pool_.size());
        return 0;
    });

    const std::optional<std::string> given =
        config.lock_in_mode == LockInMode::user_caption ? config.user_caption : std::nullopt;
    auto inv = step_invert(request.image, given, config);
    auto directions = step_directions(request.instruction, config, inv.caption);

    EditResult result;
    in_stage("editing", [&] {
        const auto shifted =
            apply_direction(inv.caption_embedding, directions.direction, static_cast<float>(config.direction_strength));
        result.edited_image = sample_and_decode(inv, shifted, config);
        if (config.reconstruct) result.inverted_reconstruction = sample_and_decode(inv, inv.caption_embedding, config);
        return 0;
    });
    result.caption_used = inv.caption;
    result.bundle = directions.bundle;
    result.direction = std::move(directions.direction);

    auto& p = result.provenance;
    p["version"] = 1;
    p["instruction"] = request.instruction;
    p["config"] = config;
    p["source"] = image_record(request.image);
    p["preprocessing"] = {{"native_resolution", suite_.latent_codec->native_resolution()},
                          {"resized", inv.prepared.width != request.image.width ||
                                          inv.prepared.height != request.image.height}};
    p["caption_used"] = inv.caption;
    p["caption_source"] = given ? "user" : "captioner";
    p["backends"] = suite_.identifiers();
    p["few_shot_pool_sha256"] = pool_digest_;
    p["attempts"] = directions.attempts;
    p["degraded"] = directions.degraded;
    p["bundle"] = {{"before", result.bundle.before},
                   {"after", result.bundle.after},
                   {"lock_in_source", to_string(result.bundle.lock_in_source)}};
    p["attention_guidance"] = attention_ ? nlohmann::json(attention_->name()) : nlohmann::json(nullptr);
    p["outputs"] = {{"edited", image_record(result.edited_image)}};
    if (result.inverted_reconstruction) p["outputs"]["reconstruction"] = image_record(*result.inverted_reconstruction);
    return result;
}

ReplayInput replay_input(const nlohmann::json& provenance) {
    try {
        ReplayInput r;
        if (provenance.at("version").get<int>() != 1) throw ConfigError("unsupported provenance version");
        r.instruction = provenance.at("instruction").get<std::string>();
        r.config = provenance.at("config").get<EditConfig>();
        r.source_sha256 = provenance.at("source").at("sha256").get<std::string>();
        r.edited_sha256 = provenance.at("outputs").at("edited").at("sha256").get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed provenance record: ") + e.what());
    }
}

}  // namespace otf
