// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "otfedit/prompting.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "otfedit/error.hpp"

namespace otf {

namespace {

constexpr std::string_view kInstruct = "Instruct: ";
constexpr std::string_view kOutputHeader = "Output: Before transformation";
constexpr std::string_view kBeforeHeader = "Before transformation";
constexpr std::string_view kAfterSentinel = "After transformation";

constexpr PromptTemplate kTerse{
    PromptStyle::terse,
    "Given the transformation `[TRANSFORMATION]', generate [NUMBER]\n"
    "image captions for before and after the transformation."};

constexpr PromptTemplate kDetailed{
    PromptStyle::detailed,
    "Employing the specified method `[TRANSFORMATION]', craft [NUMBER] pairs of descriptive captions "
    "delineating the images both prior to and following the application of the transformation process, "
    "elucidating the changes brought about."};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string caption_marker(int k) { return "Caption " + std::to_string(k) + ":"; }

void render_captions(std::string& out, std::span<const std::string> captions) {
    for (std::size_t i = 0; i < captions.size(); ++i) {
        if (i) out += '\n';
        out += caption_marker(static_cast<int>(i) + 1);
        out += ' ';
        out += captions[i];
    }
}

std::string live_instruction(std::string_view transformation, int n_captions, PromptStyle style) {
    std::string out(kInstruct);
    out += prompt_template(style).instantiate(transformation, n_captions);
    out += '\n';
    out += kOutputHeader;
    out += "\n\n";
    return out;
}

// "Caption k: text" -> (k, text); anything else -> nullopt.
std::optional<std::pair<int, std::string_view>> match_marker(std::string_view line) {
    line = trim(line);
    constexpr std::string_view prefix = "Caption ";
    if (!line.starts_with(prefix)) return std::nullopt;
    std::size_t pos = prefix.size();
    int k = 0;
    std::size_t digits = 0;
    while (pos < line.size() && line[pos] >= '0' && line[pos] <= '9' && digits < 6) {
        k = k * 10 + (line[pos] - '0');
        ++pos;
        ++digits;
    }
    if (digits == 0 || pos >= line.size() || line[pos] != ':') return std::nullopt;
    return std::pair{k, trim(line.substr(pos + 1))};
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

// Captions numbered first..last from one side of the output. With
// `implicit_first`, the segment's first line is the text that followed a
// prompt ending in "Caption <first>:".
std::vector<std::string> extract_side(std::string_view segment, int first, int last, bool implicit_first,
                                      std::string_view side, std::string_view raw) {
    std::vector<std::optional<std::string>> found(static_cast<std::size_t>(std::max(0, last - first + 1)));
    int remaining = static_cast<int>(found.size());
    const auto lines = split_lines(segment);
    for (std::size_t i = 0; i < lines.size() && remaining > 0; ++i) {
        const auto line = lines[i];
        if (trim(line).starts_with("Instruct:")) break;
        const auto marker = match_marker(line);
        if (i == 0 && implicit_first && !marker) {
            if (!trim(line).empty()) {
                found[0] = std::string(trim(line));
                --remaining;
            }
            continue;
        }
        if (!marker) continue;
        const auto [k, text] = *marker;
        if (k < first || k > last) continue;
        auto& slot = found[static_cast<std::size_t>(k - first)];
        if (slot) continue;
        if (text.empty()) {
            throw ParseError("empty " + std::string(side) + " caption " + std::to_string(k), std::string(raw));
        }
        slot = std::string(text);
        --remaining;
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < found.size(); ++i) {
        if (!found[i]) {
            throw ParseError("missing " + std::string(side) + " caption " + std::to_string(first + static_cast<int>(i)),
                             std::string(raw));
        }
        out.push_back(std::move(*found[i]));
    }
    return out;
}

void check_caption_count(int n_captions) {
    if (!valid_caption_count(n_captions)) {
        throw ConfigError("caption count must be 1, 2 or 4 (got " + std::to_string(n_captions) + ")");
    }
}

void check_lock_in(const std::optional<std::string>& lock_in) {
    if (!lock_in) return;
    if (trim(*lock_in).empty()) throw ConfigError("lock-in caption is empty");
    if (lock_in->find('\n') != std::string::npos) throw ConfigError("lock-in caption spans several lines");
}

}  // namespace

std::string_view to_string(PromptStyle style) { return style == PromptStyle::terse ? "terse" : "detailed"; }

PromptStyle prompt_style_from_string(std::string_view text) {
    if (text == "terse") return PromptStyle::terse;
    if (text == "detailed") return PromptStyle::detailed;
    throw ConfigError("unknown prompt style '" + std::string(text) + "'");
}

std::string_view to_string(LockInSource source) {
    switch (source) {
        case LockInSource::none: return "none";
        case LockInSource::generated_captioner: return "generated-captioner";
        case LockInSource::user_provided: return "user-provided";
    }
    return "none";
}

std::string PromptTemplate::instantiate(std::string_view transformation, int number) const {
    std::string out(body);
    const auto t = out.find(kTransformation);
    out.replace(t, kTransformation.size(), transformation);
    // The number placeholder sits after the transformation; search past it so
    // a transformation containing "[NUMBER]" stays verbatim.
    const auto n = out.find(kNumber, t + transformation.size());
    out.replace(n, kNumber.size(), std::to_string(number));
    return out;
}

const PromptTemplate& prompt_template(PromptStyle style) { return style == PromptStyle::terse ? kTerse : kDetailed; }

bool valid_caption_count(int n_captions) { return n_captions == 1 || n_captions == 2 || n_captions == 4; }
bool valid_shot_count(int shots) { return shots == 0 || shots == 1 || shots == 3; }

std::string render_output(std::span<const std::string> before, std::span<const std::string> after) {
    std::string out(kOutputHeader);
    out += "\n\n";
    render_captions(out, before);
    out += "\n\n";
    out += kAfterSentinel;
    out += "\n\n";
    render_captions(out, after);
    return out;
}

std::string render_shot(const FewShotExample& shot, int n_captions, PromptStyle style) {
    check_caption_count(n_captions);
    if (static_cast<int>(shot.before_captions.size()) < n_captions ||
        static_cast<int>(shot.after_captions.size()) < n_captions) {
        throw ConfigError("few-shot example '" + shot.transformation + "' has fewer than " +
                          std::to_string(n_captions) + " captions per side");
    }
    std::string out(kInstruct);
    out += prompt_template(style).instantiate(shot.transformation, n_captions);
    out += '\n';
    const std::span<const std::string> before(shot.before_captions.data(), static_cast<std::size_t>(n_captions));
    const std::span<const std::string> after(shot.after_captions.data(), static_cast<std::size_t>(n_captions));
    out += render_output(before, after);
    return out;
}

std::string build_prompt(std::string_view transformation, int n_captions, std::span<const FewShotExample> shots,
                         PromptStyle style, const std::optional<std::string>& lock_in) {
    if (trim(transformation).empty()) throw ConfigError("transformation is empty");
    check_caption_count(n_captions);
    check_lock_in(lock_in);

    std::string prompt;
    for (const auto& shot : shots) {
        prompt += render_shot(shot, n_captions, style);
        prompt += "\n\n";
    }
    prompt += live_instruction(transformation, n_captions, style);
    prompt += caption_marker(1);
    if (lock_in) {
        prompt += ' ';
        prompt += *lock_in;
        if (n_captions == 1) {
            // The before side is fully pinned; hand over to the after side.
            prompt += "\n\n";
            prompt += kAfterSentinel;
            prompt += "\n\n";
            prompt += caption_marker(1);
        }
    }
    return prompt;
}

CaptionBundle parse_captions(std::string_view completion, int n_captions, const std::optional<std::string>& lock_in) {
    check_caption_count(n_captions);
    check_lock_in(lock_in);

    const auto sentinel = completion.find(kAfterSentinel);
    const auto head = completion.substr(0, sentinel == std::string_view::npos ? completion.size() : sentinel);
    const auto header = head.rfind(kBeforeHeader);
    const bool full_output = header != std::string_view::npos;

    std::string_view before_segment, after_segment;
    bool after_implicit = false;
    if (lock_in && n_captions == 1 && !full_output) {
        // Continuation of a prompt that already ended in the after side's "Caption 1:".
        after_segment = completion;
        after_implicit = true;
    } else {
        if (sentinel == std::string_view::npos) {
            throw ParseError("completion has no '" + std::string(kAfterSentinel) + "' sentinel",
                             std::string(completion));
        }
        before_segment = head;
        if (full_output) before_segment = head.substr(header + kBeforeHeader.size());
        after_segment = completion.substr(sentinel + kAfterSentinel.size());
    }

    CaptionBundle bundle;
    if (lock_in) {
        bundle.before.push_back(*lock_in);
        bundle.locked_first_before = *lock_in;
        bundle.lock_in_source = LockInSource::user_provided;
        auto rest = extract_side(before_segment, 2, n_captions, false, "before", completion);
        bundle.before.insert(bundle.before.end(), rest.begin(), rest.end());
    } else {
        bundle.before = extract_side(before_segment, 1, n_captions, !full_output, "before", completion);
    }
    bundle.after = extract_side(after_segment, 1, n_captions, after_implicit, "after", completion);
    return bundle;
}

std::vector<FewShotExample> sample_few_shot(std::span<const FewShotExample> pool, int k, int n_captions,
                                            std::uint64_t rng_seed) {
    if (!valid_shot_count(k)) throw ConfigError("shot count must be 0, 1 or 3 (got " + std::to_string(k) + ")");
    check_caption_count(n_captions);
    if (static_cast<int>(pool.size()) < k) {
        throw ConfigError("few-shot pool has " + std::to_string(pool.size()) + " entries, " + std::to_string(k) +
                          " requested");
    }
    std::mt19937_64 rng(rng_seed);
    std::vector<std::size_t> indices(pool.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    std::sample(indices.begin(), indices.end(), std::back_inserter(chosen), k, rng);

    std::vector<FewShotExample> shots;
    for (const auto i : chosen) {
        const auto& entry = pool[i];
        const auto available = std::min(entry.before_captions.size(), entry.after_captions.size());
        if (static_cast<int>(available) < n_captions) {
            throw ConfigError("few-shot example '" + entry.transformation + "' has too few captions");
        }
        std::vector<std::size_t> slots(available);
        std::iota(slots.begin(), slots.end(), std::size_t{0});
        std::vector<std::size_t> picked;
        // Before/after captions keep their pairing.
        std::sample(slots.begin(), slots.end(), std::back_inserter(picked), n_captions, rng);
        FewShotExample shot{entry.transformation, {}, {}};
        for (const auto s : picked) {
            shot.before_captions.push_back(entry.before_captions[s]);
            shot.after_captions.push_back(entry.after_captions[s]);
        }
        shots.push_back(std::move(shot));
    }
    return shots;
}

void validate_pool_entry(const FewShotExample& example) {
    if (trim(example.transformation).empty()) throw ConfigError("transformation is empty");
    const auto check_side = [&](const std::vector<std::string>& side, std::string_view name) {
        if (side.size() != kPoolCaptionsPerSide) {
            throw ConfigError(std::string(name) + " has " + std::to_string(side.size()) + " captions, expected 4");
        }
        for (const auto& c : side) {
            if (trim(c).empty()) throw ConfigError(std::string(name) + " contains an empty caption");
            if (c.find('\n') != std::string::npos) throw ConfigError(std::string(name) + " caption spans lines");
        }
    };
    check_side(example.before_captions, "before_captions");
    check_side(example.after_captions, "after_captions");
}

std::vector<FewShotExample> parse_few_shot_pool(std::string_view jsonl) {
    std::vector<FewShotExample> pool;
    std::vector<std::string> problems;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            FewShotExample example{j.at("transformation").get<std::string>(),
                                   j.at("before_captions").get<std::vector<std::string>>(),
                                   j.at("after_captions").get<std::vector<std::string>>()};
            validate_pool_entry(example);
            pool.push_back(std::move(example));
        } catch (const std::exception& e) {
            problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid few-shot pool:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ConfigError(msg);
    }
    return pool;
}

std::vector<FewShotExample> load_few_shot_pool(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open few-shot pool " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_few_shot_pool(buffer.str());
}

}  // namespace otf
