// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <random>

#include "otfedit/config.hpp"
#include "otfedit/error.hpp"

using namespace otf;
using nlohmann::json;

TEST_CASE("defaults") {
    const auto c = config_from_json(resolve_config_json(std::nullopt, json::object()));
    CHECK(c.remote.models.diffusion == "CompVis/stable-diffusion-v1-4");
    CHECK(c.remote.models.language_model == "microsoft/phi-2");
    CHECK(c.remote.models.evaluator == "openai/clip-vit-base-patch32");
    CHECK(c.edit == EditConfig{});
    CHECK(c.edit.ddim_steps == 100);
    CHECK(c.edit.direction_strength == 1.0);
    CHECK(c.edit.retry_limit == 3);
    CHECK(std::filesystem::exists(c.few_shot_pool));
}

TEST_CASE("unknown keys are rejected with their path") {
    CHECK_THROWS_WITH_AS(resolve_config_json(json{{"edit", {{"n_caption", 2}}}}, json::object()),
                         "unknown config key 'edit.n_caption'", ConfigError);
    CHECK_THROWS_AS(resolve_config_json(std::nullopt, json{{"gpu", true}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(resolve_config_json(json{{"edit", {{"shots", "two"}}}}, json::object())),
                    ConfigError);
}

// Leaf settings with two distinct non-default values each.
struct Knob {
    std::vector<std::string> path;
    json a, b;
};

TEST_CASE("precedence: defaults < file < flags over random key subsets") {
    const std::vector<Knob> knobs{
        {{"edit", "n_captions"}, 2, 4},
        {{"edit", "shots"}, 0, 3},
        {{"edit", "prompt_style"}, "detailed", "detailed"},
        {{"edit", "ddim_steps"}, 50, 20},
        {{"edit", "direction_strength"}, 0.5, 1.5},
        {{"edit", "rng_seed"}, 7, 9},
        {{"edit", "guidance_scale"}, 5.0, 9.0},
        {{"models", "captioner"}, "x/cap-a", "x/cap-b"},
        {{"models", "language_model"}, "x/lm-a", "x/lm-b"},
        {{"model_host", "url"}, "http://h:1", "http://h:2"},
        {{"device", ""}, "cpu", "mps"},
        {{"fake", "resolution"}, 64, 128},
        {{"service", "port"}, 9000, 9001},
    };
    auto set = [](json& j, const Knob& k, const json& v) {
        if (k.path[1].empty())
            j[k.path[0]] = v;
        else
            j[k.path[0]][k.path[1]] = v;
    };
    auto get = [](const json& j, const Knob& k) { return k.path[1].empty() ? j.at(k.path[0]) : j.at(k.path[0]).at(k.path[1]); };

    const auto defaults = default_config_json();
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        json file = json::object(), flags = json::object();
        std::vector<int> layer(knobs.size());
        for (std::size_t i = 0; i < knobs.size(); ++i) {
            layer[i] = static_cast<int>(rng() % 4);  // 0 none, 1 file, 2 flags, 3 both
            if (layer[i] & 1) set(file, knobs[i], knobs[i].a);
            if (layer[i] & 2) set(flags, knobs[i], knobs[i].b);
        }
        const auto resolved = resolve_config_json(file, flags);
        for (std::size_t i = 0; i < knobs.size(); ++i) {
            const json expected = (layer[i] & 2) ? knobs[i].b : (layer[i] & 1) ? knobs[i].a : get(defaults, knobs[i]);
            CHECK(get(resolved, knobs[i]) == expected);
        }
        CHECK_NOTHROW(config_from_json(resolved));
    }
}

TEST_CASE("config file and environment variable") {
    const auto path = std::filesystem::temp_directory_path() / "otfedit_test_config.json";
    {
        std::ofstream out(path);
        out << R"({"edit": {"shots": 3}, "device": "cpu"})";
    }
    CHECK(config_path(std::nullopt) == std::nullopt);
    setenv(kConfigEnvVar, path.c_str(), 1);
    const auto found = config_path(std::nullopt);
    REQUIRE(found);
    CHECK(*found == path);
    CHECK(config_path(std::filesystem::path("other.json")) == std::filesystem::path("other.json"));
    unsetenv(kConfigEnvVar);

    const auto c = config_from_json(resolve_config_json(read_config_file(path), json{{"edit", {{"shots", 0}}}}));
    CHECK(c.edit.shots == 0);
    CHECK(c.device == "cpu");

    {
        std::ofstream out(path);
        out << "{ not json";
    }
    CHECK_THROWS_AS(read_config_file(path), ConfigError);
    CHECK_THROWS_AS(read_config_file(path.string() + ".missing"), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("fake suite from config") {
    auto c = config_from_json(resolve_config_json(std::nullopt, json{{"fake", {{"resolution", 64}}}}));
    const auto suite = make_suite(c, true);
    CHECK(suite.latent_codec->native_resolution() == 64);
    CHECK(suite.text_encoder->shape() == EmbeddingShape{77, 768});
}
