// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "otfedit/fake_backends.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "otfedit/encoding.hpp"
#include "otfedit/error.hpp"
#include "otfedit/prompting.hpp"

namespace otf {

namespace {

std::uint64_t mix(std::uint64_t seed, std::string_view bytes) {
    std::string buf(reinterpret_cast<const char*>(&seed), sizeof(seed));
    buf += bytes;
    return stable_hash64(buf);
}

std::vector<std::string_view> whitespace_tokens(std::string_view text) {
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) tokens.push_back(text.substr(start, i - start));
    }
    return tokens;
}

void fill_row(Eigen::Ref<Eigen::RowVectorXf> row, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (Eigen::Index i = 0; i < row.size(); ++i) row[i] = static_cast<float>(2.0 * unit_double(rng()) - 1.0);
}

struct NamedColour {
    const char* name;
    int r, g, b;
};

constexpr std::array<NamedColour, 11> kPalette{{{"black", 0, 0, 0},
                                                {"white", 255, 255, 255},
                                                {"gray", 128, 128, 128},
                                                {"red", 200, 30, 30},
                                                {"green", 40, 160, 60},
                                                {"blue", 40, 70, 200},
                                                {"yellow", 230, 210, 40},
                                                {"orange", 240, 140, 30},
                                                {"purple", 130, 50, 160},
                                                {"brown", 120, 80, 40},
                                                {"pink", 240, 150, 190}}};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

struct LiveInstruction {
    std::string transformation;
    int n_captions = 0;
    std::string tail;  // text after "Output: Before transformation\n\nCaption 1:"
};

// Matches the last "Instruct:" block against both instruction templates.
std::optional<LiveInstruction> read_live_instruction(std::string_view prompt) {
    const auto start = prompt.rfind("Instruct: ");
    if (start == std::string_view::npos) return std::nullopt;
    const auto live = prompt.substr(start + std::string_view("Instruct: ").size());
    constexpr std::string_view kOpen = "\nOutput: Before transformation\n\nCaption 1:";
    const auto open = live.find(kOpen);
    if (open == std::string_view::npos) return std::nullopt;
    const auto instruction = live.substr(0, open);

    for (auto style : {PromptStyle::terse, PromptStyle::detailed}) {
        const auto body = prompt_template(style).body;
        const auto tpos = body.find(PromptTemplate::kTransformation);
        const auto npos = body.find(PromptTemplate::kNumber);
        const auto prefix = body.substr(0, tpos);
        const auto middle = body.substr(tpos + PromptTemplate::kTransformation.size(),
                                        npos - tpos - PromptTemplate::kTransformation.size());
        const auto suffix = body.substr(npos + PromptTemplate::kNumber.size());
        if (!instruction.starts_with(prefix) || !instruction.ends_with(suffix)) continue;
        auto inner = instruction.substr(prefix.size(), instruction.size() - prefix.size() - suffix.size());
        std::size_t digits = 0;
        while (digits < inner.size() && std::isdigit(static_cast<unsigned char>(inner[inner.size() - 1 - digits])))
            ++digits;
        if (digits == 0 || digits > 3) continue;
        const int n = std::stoi(std::string(inner.substr(inner.size() - digits)));
        inner.remove_suffix(digits);
        if (!inner.ends_with(middle)) continue;
        inner.remove_suffix(middle.size());
        return LiveInstruction{std::string(inner), n, std::string(live.substr(open + kOpen.size()))};
    }
    return std::nullopt;
}

std::string one_line(std::string_view text) {
    std::string out;
    for (char c : trim(text)) out += (c == '\n' || c == '\r') ? ' ' : c;
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string FakeCaptioner::caption(const Image& image) {
    ++calls_;
    if (image.empty()) throw BackendError("captioner", "empty image");
    double sum[3] = {0, 0, 0};
    for (std::size_t i = 0; i < image.rgb.size(); i += 3)
        for (int c = 0; c < 3; ++c) sum[c] += image.rgb[i + static_cast<std::size_t>(c)];
    const double n = static_cast<double>(image.rgb.size() / 3);
    const double r = sum[0] / n, g = sum[1] / n, b = sum[2] / n;
    const NamedColour* best = &kPalette[0];
    double best_d = 1e300;
    for (const auto& colour : kPalette) {
        const double d = (r - colour.r) * (r - colour.r) + (g - colour.g) * (g - colour.g) +
                         (b - colour.b) * (b - colour.b);
        if (d < best_d) {
            best_d = d;
            best = &colour;
        }
    }
    return std::string("A photo of a ") + best->name + " scene.";
}

// ---------------------------------------------------------------------------

FakeTextEncoder::FakeTextEncoder(EmbeddingShape shape, std::uint64_t seed) : shape_(shape), seed_(seed) {
    if (shape_.tokens < 2 || shape_.width < 1) throw ConfigError("fake text encoder needs >= 2 tokens and width >= 1");
}

std::string FakeTextEncoder::identifier() const {
    return "fake-text-encoder/" + std::to_string(shape_.tokens) + "x" + std::to_string(shape_.width) + "/seed=" +
           std::to_string(seed_);
}

ConditioningEmbedding<float> FakeTextEncoder::encode(std::string_view text) {
    const auto tokens = whitespace_tokens(text);
    ConditioningEmbedding<float> out(shape_.tokens, shape_.width);
    fill_row(out.row(0), mix(seed_, "<bos>"));
    const int content = std::min<int>(static_cast<int>(tokens.size()), shape_.tokens - 2);
    std::string prefix;
    for (int i = 0; i < content; ++i) {
        prefix += tokens[static_cast<std::size_t>(i)];
        prefix += '\x1f';
        fill_row(out.row(i + 1), mix(seed_, prefix));
    }
    const std::string whole = "<eos>\x1f" + std::string(text);
    fill_row(out.row(content + 1), mix(seed_, whole));
    for (int i = content + 2; i < shape_.tokens; ++i) {
        fill_row(out.row(i), mix(seed_ + static_cast<std::uint64_t>(i), whole));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string FakeLanguageModel::complete(std::string_view prompt, const DecodingParams& params) {
    ++calls_;
    params.validate();
    const auto live = read_live_instruction(prompt);
    if (!live) throw BackendError("language_model", "unrecognized prompt shape (no parsable live instruction)");
    if (!valid_caption_count(live->n_captions)) {
        throw BackendError("language_model", "unsupported caption count " + std::to_string(live->n_captions));
    }

    // Which part of the output the prompt already contains.
    const int n = live->n_captions;
    int first_before = 1;
    bool before_side = true;
    constexpr std::string_view kHandOver = "\n\nAfter transformation\n\nCaption 1:";
    if (!live->tail.empty()) {
        std::string_view tail = live->tail;
        if (!tail.starts_with(' ') || trim(tail).empty()) {
            throw BackendError("language_model", "unrecognized prompt shape after the first caption marker");
        }
        if (tail.ends_with(kHandOver)) {
            if (n != 1 || tail.substr(0, tail.size() - kHandOver.size()).find('\n') != std::string_view::npos) {
                throw BackendError("language_model", "unrecognized lock-in prompt shape");
            }
            before_side = false;
        } else {
            if (tail.find('\n') != std::string_view::npos) {
                throw BackendError("language_model", "unrecognized lock-in prompt shape");
            }
            first_before = 2;
        }
    }

    static constexpr std::array<const char*, 6> kAdjectives{"quiet", "sunny", "crowded", "dim", "colorful", "plain"};
    static constexpr std::array<const char*, 4> kNouns{"photo", "picture", "snapshot", "view"};
    std::mt19937_64 rng(mix(params.rng_seed, prompt));
    const auto pick = [&](const auto& list) { return std::string(list[rng() % list.size()]); };
    const std::string edit = one_line(live->transformation);

    std::ostringstream out;
    bool first_line = true;
    const auto emit = [&](int k, const std::string& caption, bool implicit) {
        if (implicit) {
            out << ' ' << caption;
        } else {
            if (!first_line) out << '\n';
            out << "Caption " << k << ": " << caption;
        }
        first_line = false;
    };
    if (before_side) {
        if (first_before == 2) out << '\n';
        for (int k = first_before; k <= n; ++k) {
            emit(k, "A " + pick(kAdjectives) + " " + pick(kNouns) + " of the original scene.", k == 1);
        }
        out << "\n\nAfter transformation\n\n";
        first_line = true;
    }
    for (int k = 1; k <= n; ++k) {
        const std::string caption = "A " + pick(kAdjectives) + " " + pick(kNouns) + " after the edit: " + edit + ".";
        emit(k, caption, !before_side && k == 1);
    }

    // Emulate the token budget on whitespace-separated words.
    std::string text = out.str();
    int words = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const bool space = std::isspace(static_cast<unsigned char>(text[i]));
        if (!space && !in_word && ++words > params.max_new_tokens) {
            text.resize(i);
            break;
        }
        in_word = !space;
    }
    return text;
}

// ---------------------------------------------------------------------------

LatentTensor<float> FakeLatentCodec::encode(const Image& image) {
    if (image.empty() || image.width % kDownscale || image.height % kDownscale) {
        throw ShapeError("fake codec needs image sides that are positive multiples of 8");
    }
    const LatentShape shape{kChannels, image.height / kDownscale, image.width / kDownscale};
    LatentTensor<float> latent(shape);
    constexpr float kInv = 1.0f / (kDownscale * kDownscale * 127.5f);
    for (int by = 0; by < shape.height; ++by) {
        for (int bx = 0; bx < shape.width; ++bx) {
            float sum[3] = {0, 0, 0};
            for (int y = 0; y < kDownscale; ++y)
                for (int x = 0; x < kDownscale; ++x) {
                    const auto* p = image.pixel(bx * kDownscale + x, by * kDownscale + y);
                    for (int c = 0; c < 3; ++c) sum[c] += p[c];
                }
            for (int c = 0; c < 3; ++c) latent.at(c, by, bx) = sum[c] * kInv - 1.0f;
            latent.at(3, by, bx) = (sum[0] + sum[1] + sum[2]) * kInv / 3.0f - 1.0f;
        }
    }
    return latent;
}

Image FakeLatentCodec::decode(const LatentTensor<float>& latent) {
    const auto& s = latent.shape();
    if (s.channels != kChannels || s.height <= 0 || s.width <= 0) {
        throw ShapeError("fake codec cannot decode latent of shape " + s.to_string());
    }
    Image image(s.width * kDownscale, s.height * kDownscale);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            auto* p = image.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                const float v = (latent.at(c, y / kDownscale, x / kDownscale) + 1.0f) * 127.5f;
                const float clamped = std::isfinite(v) ? std::clamp(v, 0.0f, 255.0f) : 0.0f;
                p[c] = static_cast<std::uint8_t>(std::lround(clamped));
            }
        }
    }
    return image;
}

// ---------------------------------------------------------------------------

FakeNoisePredictor::FakeNoisePredictor(FakeNoiseConfig config) : config_(config) {}

TrainingSchedule FakeNoisePredictor::training_schedule() const {
    return {training_alpha_bar(1000, 0.00085, 0.012, BetaSchedule::scaled_linear), 1, false};
}

float FakeNoisePredictor::project(const ConditioningEmbedding<float>& embedding, int channel) const {
    const Eigen::RowVectorXf mean = embedding.colwise().mean();
    Eigen::RowVectorXf weights(mean.size());
    fill_row(weights, config_.seed * 131 + static_cast<std::uint64_t>(channel) + 1);
    return config_.conditioning_scale * mean.dot(weights) / std::sqrt(static_cast<float>(mean.size()));
}

std::string FakeNoisePredictor::identifier() const {
    static constexpr const char* kFamilies[] = {"constant", "linear", "conditioned"};
    std::ostringstream out;
    out << "fake-noise-predictor/" << kFamilies[static_cast<int>(config_.family)] << "/c=" << config_.constant
        << "/k=" << config_.k << "/s=" << config_.conditioning_scale << "/seed=" << config_.seed;
    return out.str();
}

LatentTensor<float> FakeNoisePredictor::predict_conditional(const LatentTensor<float>& latent, int /*timestep*/,
                                                            const ConditioningEmbedding<float>& embedding) {
    using Family = FakeNoiseConfig::Family;
    switch (config_.family) {
        case Family::constant: return LatentTensor<float>::constant(latent.shape(), config_.constant);
        case Family::linear: return LatentTensor<float>(latent.shape(), config_.k * latent.values());
        case Family::conditioned: break;
    }
    const auto& s = latent.shape();
    LatentTensor<float> eps(s, config_.k * latent.values());
    constexpr float kTwoPi = 2.0f * std::numbers::pi_v<float>;
    for (int c = 0; c < s.channels; ++c) {
        const float amplitude = project(embedding, c);
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x) {
                const float pattern = 0.5f + 0.5f * std::sin(kTwoPi * (static_cast<float>(x) / s.width + 0.25f * c)) *
                                                 std::cos(kTwoPi * static_cast<float>(y) / s.height);
                eps.at(c, y, x) += amplitude * pattern;
            }
    }
    return eps;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd FakeEvalEmbedder::embed_image(const Image& image) {
    if (image.empty()) throw BackendError("eval_embedder", "empty image");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(kDim);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(16);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const int cell = (y * 4 / image.height) * 4 + (x * 4 / image.width);
            const auto* p = image.pixel(x, y);
            for (int c = 0; c < 3; ++c) v[cell * 3 + c] += p[c] / 255.0 - 0.5;
            counts[cell] += 1.0;
        }
    for (int cell = 0; cell < 16; ++cell)
        if (counts[cell] > 0)
            for (int c = 0; c < 3; ++c) v[cell * 3 + c] /= counts[cell];
    v.array() += 1e-3;  // keeps solid mid-grey images away from the zero vector
    return v;
}

Eigen::VectorXd FakeEvalEmbedder::embed_text(std::string_view text) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(kDim, 1e-3);
    for (auto token : whitespace_tokens(text)) {
        std::string lower(token);
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        const auto h = stable_hash64(lower);
        v[static_cast<Eigen::Index>(h % kDim)] += ((h >> 32) & 1) ? 1.0 : -1.0;
    }
    return v;
}

// ---------------------------------------------------------------------------

BackendSuite make_fake_suite(const FakeSuiteOptions& options) {
    BackendSuite suite;
    suite.captioner = std::make_shared<FakeCaptioner>();
    suite.text_encoder = std::make_shared<FakeTextEncoder>(options.embedding);
    suite.language_model = std::make_shared<FakeLanguageModel>();
    suite.latent_codec = std::make_shared<FakeLatentCodec>(options.resolution);
    suite.noise_predictor = std::make_shared<FakeNoisePredictor>(options.noise);
    return suite;
}

}  // namespace otf
