// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <ostream>
#include <string>

#include "json.hpp"
#include "otfedit/pipeline.hpp"

namespace otf {

//
// HTTP front end over a Pipeline. All endpoints are stateless:
//
//   GET  /health       {"status", "backends"}
//   GET  /config       resolved configuration and edit defaults
//   POST /edit         multipart: image (PNG), instruction, config (JSON overrides)
//   POST /invert       multipart: image (PNG), caption (optional), config
//   POST /directions   JSON: {"instruction", "caption"?, "config"?}
//
// Failures answer {"error": {"stage", "message"}}; stage "request" is a 400.
//

struct ServiceContext {
    nlohmann::json config;  // served by GET /config
    EditConfig edit_defaults;
    std::ostream* log = nullptr;  // one JSON line per request
};

class EditService {
public:
    EditService(std::shared_ptr<Pipeline> pipeline, ServiceContext context);
    ~EditService();

    // Returns the bound port; throws IoError when binding fails.
    int bind(const std::string& host, int port);
    int bind_to_any_port(const std::string& host = "127.0.0.1");
    // Blocks until stop().
    void listen();
    void stop();
    void wait_until_ready();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Knob overrides applied on top of `defaults`; throws ConfigError.
EditConfig apply_overrides(const EditConfig& defaults, const nlohmann::json& overrides);

nlohmann::json bundle_to_json(const CaptionBundle& bundle);
nlohmann::json direction_summary(const DirectionEmbedding<float>& direction);

}  // namespace otf
