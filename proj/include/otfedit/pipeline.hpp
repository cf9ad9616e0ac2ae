// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "otfedit/backends.hpp"
#include "otfedit/direction.hpp"
#include "otfedit/image.hpp"
#include "otfedit/prompting.hpp"

namespace otf {

enum class LockInMode { none, generated_caption, user_caption };

std::string_view to_string(LockInMode mode);
LockInMode lock_in_mode_from_string(std::string_view text);

enum class ParseFailurePolicy { fallback, error };

std::string_view to_string(ParseFailurePolicy policy);
ParseFailurePolicy parse_failure_policy_from_string(std::string_view text);

struct EditConfig {
    int n_captions = 1;
    int shots = 1;
    PromptStyle prompt_style = PromptStyle::terse;
    LockInMode lock_in_mode = LockInMode::generated_caption;
    std::optional<std::string> user_caption;
    int ddim_steps = 100;
    double direction_strength = 1.0;
    std::uint64_t rng_seed = 0;
    int retry_limit = 3;
    double guidance_scale = 7.5;
    double inversion_guidance_scale = 1.0;
    int max_new_tokens = 256;
    double temperature = 0.0;
    ParseFailurePolicy on_parse_failure = ParseFailurePolicy::fallback;
    bool reconstruct = true;

    // Throws ConfigError.
    void validate() const;
    DecodingParams decoding(std::uint64_t seed) const;

    bool operator==(const EditConfig&) const = default;
};

void to_json(nlohmann::json& j, const EditConfig& config);
// Missing keys keep their defaults; unknown keys and bad values throw ConfigError.
void from_json(const nlohmann::json& j, EditConfig& config);

// Knob label shared by the two prompt styles, e.g. "1shot-2cap-lock".
std::string knob_label(const EditConfig& config);
// Knob label plus prompt style, e.g. "1shot-2cap-lock-terse".
std::string fingerprint(const EditConfig& config);

// SHA-256 over the dimensions and raw RGB bytes.
std::string image_digest(const Image& image);

struct EditRequest {
    Image image;
    std::string instruction;
    EditConfig config;
};

struct DirectionsResult {
    CaptionBundle bundle;
    DirectionEmbedding<float> direction;
    std::string raw_completion;
    std::string prompt;
    bool degraded = false;
    nlohmann::json attempts = nlohmann::json::array();
};

struct InversionResult {
    LatentTensor<float> noise_latent;
    Image reconstruction;
    std::string caption_used;
};

struct EditResult {
    Image edited_image;
    std::optional<Image> inverted_reconstruction;
    std::string caption_used;
    CaptionBundle bundle;
    DirectionEmbedding<float> direction;
    nlohmann::json provenance;
};

// Extension point for attention-level guidance. Sees every noise prediction
// made while sampling back from the inverted latent and returns the one to use.
class AttentionGuidanceHook {
public:
    virtual ~AttentionGuidanceHook() = default;
    virtual std::string name() const = 0;
    virtual LatentTensor<float> guide(int step, int timestep, const LatentTensor<float>& latent,
                                      const LatentTensor<float>& epsilon, const Conditioning<float>& conditioning) = 0;
};

// Caption, invert, generate a direction, resample. One request at a time per
// instance; every failure is rethrown as a StageError.
class Pipeline {
public:
    Pipeline(BackendSuite suite, std::vector<FewShotExample> pool);

    EditResult edit(const EditRequest& request);

    // Step 1 alone. A supplied caption bypasses the captioner.
    InversionResult invert_only(const Image& image, const std::optional<std::string>& caption,
                                const EditConfig& config);

    // Step 2 alone. `step1_caption` feeds lock-in and the parse fallback.
    DirectionsResult generate_directions(const std::string& instruction, const EditConfig& config,
                                         const std::optional<std::string>& step1_caption = std::nullopt);

    void set_attention_guidance(std::shared_ptr<AttentionGuidanceHook> hook);

    const BackendSuite& suite() const { return suite_; }
    const std::vector<FewShotExample>& pool() const { return pool_; }

private:
    struct Inverted {
        Image original;
        Image prepared;
        std::string caption;
        ConditioningEmbedding<float> caption_embedding;
        ConditioningEmbedding<float> unconditional;
        LatentTensor<float> noise;
    };

    Inverted step_invert(const Image& image, const std::optional<std::string>& caption, const EditConfig& config);
    DirectionsResult step_directions(const std::string& instruction, const EditConfig& config,
                                     const std::optional<std::string>& step1_caption);
    Image sample_and_decode(const Inverted& inv, const ConditioningEmbedding<float>& conditioning,
                            const EditConfig& config);

    BackendSuite suite_;
    std::vector<FewShotExample> pool_;
    std::string pool_digest_;
    std::shared_ptr<AttentionGuidanceHook> attention_;
    std::mutex mutex_;
};

// Source image digest and the fields needed to rerun an edit.
struct ReplayInput {
    std::string instruction;
    EditConfig config;
    std::string source_sha256;
    std::string edited_sha256;
};

ReplayInput replay_input(const nlohmann::json& provenance);

}  // namespace otf
