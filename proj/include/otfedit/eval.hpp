// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "otfedit/backends.hpp"
#include "otfedit/error.hpp"
#include "otfedit/pipeline.hpp"

namespace otf {

//
// Benchmark harness. Dataset layout:
//
//   <root>/<split>/metadata.jsonl   one record per line:
//     {"id", "source_image", "instruction", "gold_caption", "gold_image", "source_gold_caption"}
//   image fields are PNG paths relative to <root>/<split>/.
//

enum class Split { dev, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

inline constexpr std::size_t kOfficialTestSize = 1053;

struct EvalTriple {
    std::string id;
    std::filesystem::path source_image;
    std::string instruction;
    std::string gold_caption;
    std::filesystem::path gold_image;
    std::string source_gold_caption;
};

struct Dataset {
    std::vector<EvalTriple> triples;
    std::vector<std::string> warnings;
};

// Load problems, one entry per bad record or file.
class DatasetError : public Error {
public:
    explicit DatasetError(std::vector<std::string> items);
    const std::vector<std::string>& items() const noexcept { return items_; }

private:
    std::vector<std::string> items_;
};

Dataset load_dataset(const std::filesystem::path& root, Split split);

// Writes `count` coloured-object recolouring triples in the layout above.
void write_synthetic_dataset(const std::filesystem::path& root, Split split, int count, std::uint64_t seed = 0,
                             int size = 64);

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct ItemScore {
    double clip_t = 0;
    double clip_i = 0;
};

ItemScore score_item(const Image& edited, const EvalTriple& triple, EvalEmbedder& scorer);

// Precomputed gold-side embeddings, reused across configurations.
ItemScore score_item(const Image& edited, const Eigen::VectorXd& gold_image_embedding,
                     const Eigen::VectorXd& gold_text_embedding, EvalEmbedder& scorer);

struct AvgStdev {
    double avg = 0;
    double stdev = 0;
};

// Mean and population standard deviation (divisor = count).
AvgStdev avg_stdev(std::span<const double> values);

struct ItemRow {
    std::string id;
    std::string fingerprint;
    bool ok = false;
    double clip_t = 0;
    double clip_i = 0;
    std::string stage;  // failure stage
    std::string error;
};

struct ConfigAggregate {
    EditConfig config;
    std::string fingerprint;
    double clip_t_mean = 0;
    double clip_i_mean = 0;
    int items = 0;
    int failures = 0;
};

// One knob setting run under both prompt styles.
struct PairedRow {
    std::string knobs;
    ConfigAggregate terse;
    ConfigAggregate detailed;
    AvgStdev clip_t;
    AvgStdev clip_i;
};

struct EvalReport {
    std::vector<ItemRow> items;
    std::vector<ConfigAggregate> configs;
    std::vector<PairedRow> rows;
    nlohmann::json metadata;
};

// Knob grid: {0,1,3} shots x {1 caption, 1/2/4 captions with captioner lock-in} x 2 styles.
std::vector<EditConfig> knob_grid(const EditConfig& base);
// Oracle grid: 1-shot 1-caption lock-in, with and without the gold source caption, x 2 styles.
std::vector<EditConfig> oracle_grid(const EditConfig& base);

// Published reference scores keyed by knob label, and baseline scores.
nlohmann::json reference_scores();

struct GridOptions {
    std::optional<std::filesystem::path> checkpoint;  // item-level JSONL, appended and resumed
    std::function<void(const ItemRow&)> on_item;
};

// Configs must come in terse/detailed pairs differing only in prompt style.
// user_caption configs take each item's source_gold_caption.
EvalReport run_grid(const Dataset& dataset, const std::vector<EditConfig>& configs, Pipeline& pipeline,
                    EvalEmbedder& scorer, const GridOptions& options = {});

// report.tsv, items.tsv and report_meta.json.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

std::string format_report_tsv(const EvalReport& report);
std::string format_items_tsv(const EvalReport& report);

}  // namespace otf
