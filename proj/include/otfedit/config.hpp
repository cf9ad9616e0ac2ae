// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "otfedit/backends.hpp"
#include "otfedit/fake_backends.hpp"
#include "otfedit/pipeline.hpp"
#include "otfedit/remote_backends.hpp"

namespace otf {

//
// Application configuration. Values resolve as defaults < config file < flags,
// each layer applied as a JSON merge patch.
//

inline constexpr const char* kConfigEnvVar = "OTFEDIT_CONFIG";

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
};

struct AppConfig {
    RemoteOptions remote;
    std::string device = "cuda";
    std::string precision = "fp16";
    EditConfig edit;
    std::filesystem::path few_shot_pool;
    FakeSuiteOptions fake;
    ServiceOptions service;
};

nlohmann::json default_config_json();

// Rejects keys absent from the defaults, naming the dotted path.
void check_known_keys(const nlohmann::json& patch, const nlohmann::json& reference, const std::string& where = "");

// defaults, then each present layer; throws ConfigError.
nlohmann::json resolve_config_json(const std::optional<nlohmann::json>& file, const nlohmann::json& flags);

AppConfig config_from_json(const nlohmann::json& resolved);
nlohmann::json config_to_json(const AppConfig& config);

nlohmann::json read_config_file(const std::filesystem::path& path);

// Explicit path, else $OTFEDIT_CONFIG, else none.
std::optional<std::filesystem::path> config_path(const std::optional<std::filesystem::path>& explicit_path);

BackendSuite make_suite(const AppConfig& config, bool fake);
std::shared_ptr<EvalEmbedder> make_evaluator(const AppConfig& config, bool fake);

}  // namespace otf
