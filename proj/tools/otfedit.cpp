// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

// otfedit command-line entry points.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "otfedit/config.hpp"
#include "otfedit/direction.hpp"
#include "otfedit/error.hpp"
#include "otfedit/eval.hpp"
#include "otfedit/pipeline.hpp"
#include "otfedit/service.hpp"
#include "otfedit/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace otf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flags shared by every subcommand; unset optionals leave lower layers alone.
struct CommonFlags {
    std::optional<std::string> config_file;
    bool fake_backends = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> model_host;
    std::optional<std::string> pool;
};

struct KnobFlags {
    std::optional<int> n_captions, shots, ddim_steps, retry_limit;
    std::optional<std::string> prompt_style, lock_in, user_caption, on_parse_failure;
    std::optional<double> direction_strength, guidance_scale;
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config_file, "JSON config file (default: $OTFEDIT_CONFIG)");
    app->add_flag("--fake-backends", f.fake_backends, "Use the deterministic fake model suite");
    app->add_option("--seed", f.seed, "RNG seed for sampling and generation");
    app->add_option("--model-host", f.model_host, "Model host URL for real backends");
    app->add_option("--pool", f.pool, "Few-shot pool (JSONL)");
}

void add_knobs(CLI::App* app, KnobFlags& k) {
    app->add_option("--n-captions", k.n_captions, "Captions per side: 1, 2 or 4");
    app->add_option("--shots", k.shots, "Few-shot examples: 0, 1 or 3");
    app->add_option("--prompt-style", k.prompt_style, "terse or detailed");
    app->add_option("--lock-in", k.lock_in, "none, generated_caption or user_caption");
    app->add_option("--user-caption", k.user_caption, "Step-1 caption for --lock-in user_caption");
    app->add_option("--ddim-steps", k.ddim_steps, "DDIM steps");
    app->add_option("--direction-strength", k.direction_strength, "Edit direction scale");
    app->add_option("--guidance-scale", k.guidance_scale, "Classifier-free guidance scale");
    app->add_option("--retry-limit", k.retry_limit, "Language model attempts before fallback");
    app->add_option("--on-parse-failure", k.on_parse_failure, "fallback or error");
}

json flag_patch(const CommonFlags& c, const KnobFlags& k) {
    json p = json::object();
    json edit = json::object();
    if (c.seed) edit["rng_seed"] = *c.seed;
    if (k.n_captions) edit["n_captions"] = *k.n_captions;
    if (k.shots) edit["shots"] = *k.shots;
    if (k.prompt_style) edit["prompt_style"] = *k.prompt_style;
    if (k.lock_in) edit["lock_in_mode"] = *k.lock_in;
    if (k.user_caption) edit["user_caption"] = *k.user_caption;
    if (k.ddim_steps) edit["ddim_steps"] = *k.ddim_steps;
    if (k.direction_strength) edit["direction_strength"] = *k.direction_strength;
    if (k.guidance_scale) edit["guidance_scale"] = *k.guidance_scale;
    if (k.retry_limit) edit["retry_limit"] = *k.retry_limit;
    if (k.on_parse_failure) edit["on_parse_failure"] = *k.on_parse_failure;
    if (!edit.empty()) p["edit"] = edit;
    if (c.model_host) p["model_host"]["url"] = *c.model_host;
    if (c.pool) p["few_shot_pool"] = *c.pool;
    return p;
}

json resolved_config(const CommonFlags& c, const KnobFlags& k) {
    std::optional<json> file;
    if (const auto path = config_path(c.config_file ? std::optional<fs::path>(*c.config_file) : std::nullopt)) {
        file = read_config_file(*path);
    }
    return resolve_config_json(file, flag_patch(c, k));
}

std::shared_ptr<Pipeline> make_pipeline(const AppConfig& config, bool fake) {
    auto pool = load_few_shot_pool(config.few_shot_pool);
    return std::make_shared<Pipeline>(make_suite(config, fake), std::move(pool));
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
    return out.parent_path() / (out.stem().string() + suffix);
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

struct EditArgs {
    CommonFlags common;
    KnobFlags knobs;
    std::string image;
    std::string instruction;
    std::string out = "edited.png";
    std::optional<std::string> replay;
};

int cmd_edit(const EditArgs& a) {
    json resolved;
    std::string instruction = a.instruction;
    fs::path image_path = a.image;
    std::optional<ReplayInput> replay;
    json sidecar_in;

    if (a.replay) {
        sidecar_in = read_json(*a.replay);
        replay = replay_input(sidecar_in.at("provenance"));
        resolved = resolve_config_json(sidecar_in.at("app_config"), flag_patch(a.common, a.knobs));
        resolved["edit"] = replay->config;
        instruction = replay->instruction;
        if (image_path.empty()) image_path = sidecar_in.at("source_path").get<std::string>();
    } else {
        if (image_path.empty()) throw UsageError("edit needs an IMAGE argument (or --replay)");
        if (instruction.empty()) throw UsageError("--instruction is required");
        resolved = resolved_config(a.common, a.knobs);
    }
    const bool fake = a.common.fake_backends || (a.replay && sidecar_in.value("fake_backends", false));
    const auto config = config_from_json(resolved);
    const auto source = read_png(image_path);
    if (replay && image_digest(source) != replay->source_sha256) {
        throw IoError("source image " + image_path.string() + " does not match the recorded digest");
    }

    auto pipeline = make_pipeline(config, fake);
    const auto result = pipeline->edit({source, instruction, config.edit});
    const fs::path out = a.out;
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    write_png(out, result.edited_image);
    if (result.inverted_reconstruction) write_png(sibling(out, ".reconstruction.png"), *result.inverted_reconstruction);
    json sidecar{{"provenance", result.provenance},
                 {"app_config", resolved},
                 {"fake_backends", fake},
                 {"source_path", fs::absolute(image_path).string()}};
    write_json(sibling(out, ".provenance.json"), sidecar);

    std::cout << "caption: " << result.caption_used << "\n";
    for (const auto& c : result.bundle.before) std::cout << "before: " << c << "\n";
    for (const auto& c : result.bundle.after) std::cout << "after:  " << c << "\n";
    if (result.provenance.value("degraded", false)) std::cout << "warning: caption generation fell back\n";
    const auto digest = image_digest(result.edited_image);
    std::cout << "wrote " << out.string() << " (sha256 " << digest << ")\n";
    if (replay) {
        if (digest != replay->edited_sha256) {
            std::cerr << "replay mismatch: recorded " << replay->edited_sha256 << "\n";
            return kExitRuntime;
        }
        std::cout << "replay: identical to the recorded edit\n";
    }
    return kExitOk;
}

struct InvertArgs {
    CommonFlags common;
    KnobFlags knobs;
    std::string image;
    std::optional<std::string> caption;
    std::string out = "reconstruction.png";
    std::optional<std::string> latent_out;
};

int cmd_invert(const InvertArgs& a) {
    const auto config = config_from_json(resolved_config(a.common, a.knobs));
    auto pipeline = make_pipeline(config, a.common.fake_backends);
    auto edit = config.edit;
    edit.lock_in_mode = LockInMode::none;
    edit.user_caption.reset();
    const auto r = pipeline->invert_only(read_png(a.image), a.caption, edit);
    write_png(a.out, r.reconstruction);
    if (a.latent_out) write_tensor_file(*a.latent_out, tensor_file_from_latent(r.noise_latent));
    std::cout << "caption: " << r.caption_used << "\nwrote " << a.out << "\n";
    return kExitOk;
}

struct DirectionsArgs {
    CommonFlags common;
    KnobFlags knobs;
    std::string instruction;
    std::optional<std::string> caption;
    std::optional<std::string> direction_out;
};

int cmd_directions(const DirectionsArgs& a) {
    const auto config = config_from_json(resolved_config(a.common, a.knobs));
    auto pipeline = make_pipeline(config, a.common.fake_backends);
    auto edit = config.edit;
    if (edit.lock_in_mode == LockInMode::generated_caption && !a.caption) edit.lock_in_mode = LockInMode::none;
    const auto r = pipeline->generate_directions(a.instruction, edit, a.caption);
    if (a.direction_out) save_direction(*a.direction_out, r.direction);
    std::cout << json{{"bundle", bundle_to_json(r.bundle)},
                      {"direction", direction_summary(r.direction)},
                      {"degraded", r.degraded},
                      {"raw_completion", r.raw_completion}}
                     .dump(2)
              << "\n";
    return kExitOk;
}

struct EvalArgs {
    CommonFlags common;
    KnobFlags knobs;
    std::string dataset;
    std::string split = "test";
    std::string configs = "knobs";
    std::optional<int> subset;
    std::string out = "eval_out";
    std::optional<std::string> checkpoint;
    std::optional<int> synthetic;
};

std::vector<EditConfig> eval_configs(const std::string& spec, const EditConfig& base) {
    if (spec == "knobs") return knob_grid(base);
    if (spec == "oracle") return oracle_grid(base);
    const auto j = read_json(spec);
    if (!j.is_array()) throw ConfigError(spec + ": expected a JSON array of edit config overrides");
    std::vector<EditConfig> out;
    for (const auto& item : j) out.push_back(apply_overrides(base, item));
    return out;
}

int cmd_eval(const EvalArgs& a) {
    const auto config = config_from_json(resolved_config(a.common, a.knobs));
    const auto split = split_from_string(a.split);
    if (a.synthetic) write_synthetic_dataset(a.dataset, split, *a.synthetic);
    auto dataset = load_dataset(a.dataset, split);
    for (const auto& w : dataset.warnings) std::cerr << "warning: " << w << "\n";
    if (a.subset) {
        if (*a.subset < 0) throw UsageError("--subset must be >= 0");
        if (static_cast<std::size_t>(*a.subset) < dataset.triples.size()) dataset.triples.resize(*a.subset);
    }
    const auto configs = eval_configs(a.configs, config.edit);
    auto pipeline = make_pipeline(config, a.common.fake_backends);
    auto scorer = make_evaluator(config, a.common.fake_backends);

    GridOptions options;
    if (a.checkpoint) options.checkpoint = fs::path(*a.checkpoint);
    std::size_t done = 0;
    const std::size_t total = dataset.triples.size() * configs.size();
    options.on_item = [&](const ItemRow& row) {
        ++done;
        if (!row.ok) std::cerr << "item " << row.id << " [" << row.fingerprint << "] failed in " << row.stage << "\n";
        if (done % 50 == 0 || done == total) std::cerr << "progress " << done << "/" << total << "\n";
    };
    auto report = run_grid(dataset, configs, *pipeline, *scorer, options);
    report.metadata["split"] = a.split;
    report.metadata["fake_backends"] = a.common.fake_backends;
    write_report(a.out, report);

    const PairedRow* best_t = nullptr;
    const PairedRow* best_i = nullptr;
    for (const auto& r : report.rows) {
        if (!std::isnan(r.clip_t.avg) && (!best_t || r.clip_t.avg > best_t->clip_t.avg)) best_t = &r;
        if (!std::isnan(r.clip_i.avg) && (!best_i || r.clip_i.avg > best_i->clip_i.avg)) best_i = &r;
    }
    std::cout << report.rows.size() << " config rows over " << dataset.triples.size() << " items -> " << a.out
              << "\n";
    if (best_t) std::cout << "best CLIP-T: " << best_t->knobs << " " << best_t->clip_t.avg << "\n";
    if (best_i) std::cout << "best CLIP-I: " << best_i->knobs << " " << best_i->clip_i.avg << "\n";
    return kExitOk;
}

struct ServeArgs {
    CommonFlags common;
    std::optional<int> port;
    std::optional<std::string> host;
};

EditService* g_service = nullptr;

int cmd_serve(const ServeArgs& a) {
    json flags = flag_patch(a.common, {});
    if (a.port) flags["service"]["port"] = *a.port;
    if (a.host) flags["service"]["host"] = *a.host;
    std::optional<json> file;
    if (const auto path = config_path(a.common.config_file ? std::optional<fs::path>(*a.common.config_file)
                                                           : std::nullopt)) {
        file = read_config_file(*path);
    }
    const auto resolved = resolve_config_json(file, flags);
    const auto config = config_from_json(resolved);
    auto pipeline = make_pipeline(config, a.common.fake_backends);
    EditService service(pipeline, {resolved, config.edit, &std::clog});
    const int port = config.service.port == 0 ? service.bind_to_any_port(config.service.host)
                                              : service.bind(config.service.host, config.service.port);
    std::cout << "listening on http://" << config.service.host << ":" << port << std::endl;
    g_service = &service;
    std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
    });
    service.listen();
    g_service = nullptr;
    return kExitOk;
}

int cmd_pool_validate(const std::string& path) {
    const auto pool = load_few_shot_pool(path);
    std::cout << pool.size() << " valid few-shot examples in " << path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"otfedit: instruction-driven image editing with on-the-fly edit directions"};
    app.require_subcommand(1);

    EditArgs edit;
    auto* edit_cmd = app.add_subcommand("edit", "Edit an image from a natural-language instruction");
    add_common(edit_cmd, edit.common);
    add_knobs(edit_cmd, edit.knobs);
    edit_cmd->add_option("image", edit.image, "Source PNG");
    edit_cmd->add_option("--instruction,-i", edit.instruction, "Edit instruction");
    edit_cmd->add_option("--out,-o", edit.out, "Edited PNG path");
    edit_cmd->add_option("--replay", edit.replay, "Re-run the edit recorded in a provenance sidecar");

    InvertArgs invert;
    auto* invert_cmd = app.add_subcommand("invert", "Caption and invert an image, then reconstruct it");
    add_common(invert_cmd, invert.common);
    add_knobs(invert_cmd, invert.knobs);
    invert_cmd->add_option("image", invert.image, "Source PNG")->required();
    invert_cmd->add_option("--caption", invert.caption, "Use this caption instead of the captioner");
    invert_cmd->add_option("--out,-o", invert.out, "Reconstruction PNG path");
    invert_cmd->add_option("--latent-out", invert.latent_out, "Write the noise latent as a tensor file");

    DirectionsArgs directions;
    auto* dir_cmd = app.add_subcommand("directions", "Generate before/after captions and the edit direction");
    add_common(dir_cmd, directions.common);
    add_knobs(dir_cmd, directions.knobs);
    dir_cmd->add_option("--instruction,-i", directions.instruction, "Edit instruction")->required();
    dir_cmd->add_option("--caption", directions.caption, "Step-1 caption used for lock-in");
    dir_cmd->add_option("--direction-out", directions.direction_out, "Write the direction as a tensor file");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score a configuration grid on a benchmark split");
    add_common(eval_cmd, eval.common);
    add_knobs(eval_cmd, eval.knobs);
    eval_cmd->add_option("--dataset", eval.dataset, "Dataset root")->required();
    eval_cmd->add_option("--split", eval.split, "dev or test");
    eval_cmd->add_option("--configs", eval.configs, "knobs, oracle or a JSON file of config overrides");
    eval_cmd->add_option("--subset", eval.subset, "Use only the first N items");
    eval_cmd->add_option("--out,-o", eval.out, "Report directory");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Item-level checkpoint file for resuming");
    eval_cmd->add_option("--synthetic", eval.synthetic, "Write N synthetic items into the dataset root first");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP editing service");
    add_common(serve_cmd, serve.common);
    serve_cmd->add_option("--port", serve.port, "Listen port (0 picks a free one)");
    serve_cmd->add_option("--host", serve.host, "Listen address");

    std::string pool_path;
    auto* pool_cmd = app.add_subcommand("pool-validate", "Check a few-shot pool file");
    pool_cmd->add_option("pool", pool_path, "Pool JSONL")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*edit_cmd) return cmd_edit(edit);
        if (*invert_cmd) return cmd_invert(invert);
        if (*dir_cmd) return cmd_directions(directions);
        if (*eval_cmd) return cmd_eval(eval);
        if (*serve_cmd) return cmd_serve(serve);
        if (*pool_cmd) return cmd_pool_validate(pool_path);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n" << app.help() << "\n";
        return kExitUsage;
    } catch (const StageError& e) {
        std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const DatasetError& e) {
        std::cerr << "error [dataset]: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
