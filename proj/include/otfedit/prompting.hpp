// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace otf {

enum class PromptStyle { terse, detailed };

std::string_view to_string(PromptStyle style);
PromptStyle prompt_style_from_string(std::string_view text);

// Instruction body with the [TRANSFORMATION] and [NUMBER] placeholders.
struct PromptTemplate {
    PromptStyle style;
    std::string_view body;

    static constexpr std::string_view kTransformation = "[TRANSFORMATION]";
    static constexpr std::string_view kNumber = "[NUMBER]";

    std::string instantiate(std::string_view transformation, int number) const;
};

const PromptTemplate& prompt_template(PromptStyle style);

// A human-authored example for few-shot prompting. Pool entries carry four
// captions per side; sampled shots may be trimmed to fewer.
struct FewShotExample {
    std::string transformation;
    std::vector<std::string> before_captions;
    std::vector<std::string> after_captions;

    bool operator==(const FewShotExample&) const = default;
};

enum class LockInSource { none, generated_captioner, user_provided };

std::string_view to_string(LockInSource source);

struct CaptionBundle {
    std::vector<std::string> before;
    std::vector<std::string> after;
    std::optional<std::string> locked_first_before;
    LockInSource lock_in_source = LockInSource::none;

    bool operator==(const CaptionBundle&) const = default;
};

inline constexpr int kPoolCaptionsPerSide = 4;

bool valid_caption_count(int n_captions);
bool valid_shot_count(int shots);

// Full language-model prompt: `shots` rendered as completed interactions, one
// blank line apart, followed by the live instruction.
std::string build_prompt(std::string_view transformation, int n_captions, std::span<const FewShotExample> shots,
                         PromptStyle style, const std::optional<std::string>& lock_in = std::nullopt);

// Renders the "Output: ..." half of a completed interaction.
std::string render_output(std::span<const std::string> before, std::span<const std::string> after);

// Instruction plus completed output for one example, trimmed to n_captions per side.
std::string render_shot(const FewShotExample& shot, int n_captions, PromptStyle style);

// Splits a language-model continuation of build_prompt() into caption lists.
// Accepts either the bare continuation or an output that repeats the
// "Output: Before transformation" header. Text after the last required
// caption is discarded. Throws ParseError.
CaptionBundle parse_captions(std::string_view completion, int n_captions,
                             const std::optional<std::string>& lock_in = std::nullopt);

// k distinct pool entries, each trimmed to n_captions captions per side.
std::vector<FewShotExample> sample_few_shot(std::span<const FewShotExample> pool, int k, int n_captions,
                                            std::uint64_t rng_seed);

void validate_pool_entry(const FewShotExample& example);

// Line-delimited JSON records {"transformation", "before_captions", "after_captions"}.
std::vector<FewShotExample> load_few_shot_pool(const std::filesystem::path& path);
std::vector<FewShotExample> parse_few_shot_pool(std::string_view jsonl);

}  // namespace otf
