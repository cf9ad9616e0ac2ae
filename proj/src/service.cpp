// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "otfedit/service.hpp"

#include <chrono>
#include <ctime>
#include <mutex>

#include "httplib.h"
#include "otfedit/encoding.hpp"
#include "otfedit/error.hpp"
#include "otfedit/remote_backends.hpp"

namespace otf {

namespace {

using nlohmann::json;

json error_body(const std::string& stage, const std::string& message) {
    return {{"error", {{"stage", stage}, {"message", message}}}};
}

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

std::string form_text(const httplib::Request& req, const std::string& key) {
    return req.has_file(key) ? req.get_file_value(key).content : std::string();
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

EditConfig apply_overrides(const EditConfig& defaults, const json& overrides) {
    if (overrides.is_null()) return defaults;
    if (!overrides.is_object()) throw ConfigError("config overrides must be a JSON object");
    json merged = defaults;
    merged.merge_patch(overrides);
    return merged.get<EditConfig>();
}

json bundle_to_json(const CaptionBundle& b) {
    return {{"before", b.before},
            {"after", b.after},
            {"locked_first_before", b.locked_first_before ? json(*b.locked_first_before) : json(nullptr)},
            {"lock_in_source", to_string(b.lock_in_source)}};
}

json direction_summary(const DirectionEmbedding<float>& d) {
    return {{"shape", {d.rows(), d.cols()}},
            {"frobenius_norm", static_cast<double>(d.matrix.norm())},
            {"max_abs", d.matrix.size() ? static_cast<double>(d.matrix.cwiseAbs().maxCoeff()) : 0.0},
            {"mean", d.matrix.size() ? static_cast<double>(d.matrix.mean()) : 0.0}};
}

struct EditService::Impl {
    std::shared_ptr<Pipeline> pipeline;
    ServiceContext context;
    httplib::Server server;
    std::mutex log_mutex;

    // Runs a handler body, mapping failures onto the error schema.
    template <typename F>
    void guarded(httplib::Response& res, F&& body) {
        try {
            body();
        } catch (const StageError& e) {
            reply(res, e.stage() == "request" ? 400 : 500, error_body(e.stage(), e.what()));
        } catch (const ConfigError& e) {
            reply(res, 400, error_body("request", e.what()));
        } catch (const json::exception& e) {
            reply(res, 400, error_body("request", e.what()));
        } catch (const std::exception& e) {
            reply(res, 500, error_body("internal", e.what()));
        }
    }

    Image form_image(const httplib::Request& req) {
        if (!req.is_multipart_form_data()) throw StageError("request", "expected multipart/form-data");
        if (!req.has_file("image")) throw StageError("request", "missing form field 'image'");
        try {
            return decode_png(req.get_file_value("image").content);
        } catch (const std::exception& e) {
            throw StageError("request", std::string("image is not a readable PNG: ") + e.what());
        }
    }

    EditConfig form_config(const std::string& text) {
        if (text.empty()) return context.edit_defaults;
        json overrides;
        try {
            overrides = json::parse(text);
        } catch (const json::parse_error& e) {
            throw StageError("request", std::string("config is not JSON: ") + e.what());
        }
        try {
            return apply_overrides(context.edit_defaults, overrides);
        } catch (const ConfigError& e) {
            throw StageError("request", e.what());
        }
    }

    void mount() {
        server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, {{"status", "ok"}, {"backends", pipeline->suite().identifiers()}});
        });
        server.Get("/config", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, {{"config", context.config}, {"edit_defaults", context.edit_defaults}});
        });
        server.Post("/edit", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto image = form_image(req);
                const auto instruction = form_text(req, "instruction");
                if (instruction.empty()) throw StageError("request", "missing form field 'instruction'");
                const auto config = form_config(form_text(req, "config"));
                const auto r = pipeline->edit({std::move(image), instruction, config});
                reply(res, 200,
                      {{"edited_image", base64_encode(encode_png(r.edited_image))},
                       {"reconstruction", r.inverted_reconstruction
                                              ? json(base64_encode(encode_png(*r.inverted_reconstruction)))
                                              : json(nullptr)},
                       {"caption_used", r.caption_used},
                       {"bundle", bundle_to_json(r.bundle)},
                       {"direction", direction_summary(r.direction)},
                       {"provenance", r.provenance}});
            });
        });
        server.Post("/invert", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto image = form_image(req);
                const auto caption = form_text(req, "caption");
                const auto config = form_config(form_text(req, "config"));
                const auto r = pipeline->invert_only(
                    image, caption.empty() ? std::nullopt : std::optional<std::string>(caption), config);
                reply(res, 200,
                      {{"reconstruction", base64_encode(encode_png(r.reconstruction))},
                       {"caption_used", r.caption_used},
                       {"noise_latent", latent_to_json(r.noise_latent)}});
            });
        });
        server.Post("/directions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                json body;
                try {
                    body = json::parse(req.body);
                } catch (const json::parse_error& e) {
                    throw StageError("request", std::string("body is not JSON: ") + e.what());
                }
                if (!body.is_object() || !body.contains("instruction") || !body["instruction"].is_string()) {
                    throw StageError("request", "body needs a string 'instruction'");
                }
                std::optional<std::string> caption;
                if (body.contains("caption") && !body["caption"].is_null()) caption = body["caption"].get<std::string>();
                const auto config = form_config(body.contains("config") ? body["config"].dump() : "");
                const auto r = pipeline->generate_directions(body["instruction"].get<std::string>(), config, caption);
                reply(res, 200,
                      {{"bundle", bundle_to_json(r.bundle)},
                       {"direction", direction_summary(r.direction)},
                       {"raw_completion", r.raw_completion},
                       {"prompt", r.prompt},
                       {"degraded", r.degraded},
                       {"attempts", r.attempts}});
            });
        });
        // Requests httplib rejects before routing (bad multipart, oversize) still get the schema.
        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            if (res.status == 404) {
                reply(res, 404, error_body("request", "no such endpoint"));
            } else {
                reply(res, res.status, error_body("request", "malformed request"));
            }
        });
        server.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
            if (!context.log) return;
            json line{{"ts", utc_now()}, {"method", req.method}, {"path", req.path}, {"status", res.status},
                      {"bytes_in", req.body.size()}, {"bytes_out", res.body.size()}};
            if (res.status >= 400) {
                try {
                    line["stage"] = json::parse(res.body).at("error").at("stage");
                } catch (const json::exception&) {
                }
            }
            std::lock_guard lock(log_mutex);
            *context.log << line.dump() << std::endl;
        });
    }
};

EditService::EditService(std::shared_ptr<Pipeline> pipeline, ServiceContext context) : impl_(std::make_unique<Impl>()) {
    impl_->pipeline = std::move(pipeline);
    impl_->context = std::move(context);
    impl_->mount();
}

EditService::~EditService() { stop(); }

int EditService::bind(const std::string& host, int port) {
    if (!impl_->server.bind_to_port(host, port)) {
        throw IoError("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

int EditService::bind_to_any_port(const std::string& host) {
    const int port = impl_->server.bind_to_any_port(host);
    if (port <= 0) throw IoError("cannot bind " + host);
    return port;
}

void EditService::listen() { impl_->server.listen_after_bind(); }

void EditService::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

void EditService::wait_until_ready() { impl_->server.wait_until_ready(); }

}  // namespace otf
