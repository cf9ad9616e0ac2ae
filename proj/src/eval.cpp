// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "otfedit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "otfedit/encoding.hpp"

namespace otf {

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out = std::to_string(items.size()) + " dataset problem(s):";
    for (const auto& i : items) out += "\n  " + i;
    return out;
}

std::string fixed(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Pairing key: the whole config except the prompt style.
std::string pairing_key(const EditConfig& c) {
    nlohmann::json j = c;
    j.erase("prompt_style");
    return j.dump();
}

std::string checkpoint_key(const EditConfig& c, const std::string& id) {
    return nlohmann::json(c).dump() + "\n" + id;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

DatasetError::DatasetError(std::vector<std::string> items) : Error(join(items)), items_(std::move(items)) {}

std::string_view to_string(Split split) { return split == Split::dev ? "dev" : "test"; }

Split split_from_string(std::string_view text) {
    if (text == "dev") return Split::dev;
    if (text == "test") return Split::test;
    throw ConfigError("unknown split '" + std::string(text) + "' (expected dev or test)");
}

Dataset load_dataset(const std::filesystem::path& root, Split split) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw DatasetError({"dataset root " + root.string() + " is not a directory"});
    Dataset out;
    const auto dir = root / std::string(to_string(split));
    const auto metadata = dir / "metadata.jsonl";
    if (!fs::exists(metadata)) {
        out.warnings.push_back("no " + metadata.string() + "; dataset is empty");
        return out;
    }
    std::ifstream in(metadata);
    if (!in) throw DatasetError({"cannot read " + metadata.string()});

    std::vector<std::string> errors;
    std::set<std::string> seen;
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(number);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            errors.push_back(where + ": malformed JSON: " + e.what());
            continue;
        }
        EvalTriple t;
        bool ok = j.is_object();
        if (!ok) errors.push_back(where + ": record is not an object");
        auto field = [&](const char* name) -> std::string {
            if (!ok) return {};
            if (!j.contains(name) || !j[name].is_string() || j[name].get<std::string>().empty()) {
                errors.push_back(where + ": missing or empty field '" + name + "'");
                ok = false;
                return {};
            }
            return j[name].get<std::string>();
        };
        t.id = field("id");
        t.source_image = dir / field("source_image");
        t.instruction = field("instruction");
        t.gold_caption = field("gold_caption");
        t.gold_image = dir / field("gold_image");
        t.source_gold_caption = field("source_gold_caption");
        if (!ok) continue;
        if (!seen.insert(t.id).second) {
            errors.push_back(where + ": duplicate id '" + t.id + "'");
            continue;
        }
        for (const auto& path : {t.source_image, t.gold_image}) {
            try {
                read_png(path);
            } catch (const std::exception& e) {
                errors.push_back(where + " (" + t.id + "): " + e.what());
                ok = false;
            }
        }
        if (ok) out.triples.push_back(std::move(t));
    }
    if (!errors.empty()) throw DatasetError(std::move(errors));
    if (out.triples.empty()) out.warnings.push_back("dataset split '" + std::string(to_string(split)) + "' is empty");
    if (split == Split::test && out.triples.size() != kOfficialTestSize) {
        out.warnings.push_back("test split has " + std::to_string(out.triples.size()) + " triples; the official split has " +
                               std::to_string(kOfficialTestSize));
    }
    return out;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw ShapeError("embedding sizes differ");
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0) || !(nb > 0)) throw NumericError("zero-norm embedding");
    if (!std::isfinite(na) || !std::isfinite(nb)) throw NumericError("non-finite embedding");
    return std::clamp((a / na).dot(b / nb), -1.0, 1.0);
}

ItemScore score_item(const Image& edited, const Eigen::VectorXd& gold_image_embedding,
                     const Eigen::VectorXd& gold_text_embedding, EvalEmbedder& scorer) {
    const auto e = scorer.embed_image(edited);
    return {cosine_similarity(e, gold_text_embedding), cosine_similarity(e, gold_image_embedding)};
}

ItemScore score_item(const Image& edited, const EvalTriple& triple, EvalEmbedder& scorer) {
    return score_item(edited, scorer.embed_image(read_png(triple.gold_image)), scorer.embed_text(triple.gold_caption),
                      scorer);
}

AvgStdev avg_stdev(std::span<const double> values) {
    if (values.empty()) return {kNaN, kNaN};
    // Summed in sorted order.
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double sum = 0;
    for (double v : sorted) sum += v;
    const double mean = sum / static_cast<double>(sorted.size());
    double sq = 0;
    for (double v : sorted) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(sorted.size()))};
}

void write_synthetic_dataset(const std::filesystem::path& root, Split split, int count, std::uint64_t seed,
                             int size) {
    static const char* kColours[] = {"red", "green", "blue", "yellow", "purple", "orange"};
    static const std::uint8_t kRgb[][3] = {{200, 30, 30}, {30, 170, 40},   {40, 60, 210},
                                           {220, 210, 40}, {140, 40, 170}, {240, 140, 20}};
    static const char* kObjects[] = {"ball", "box", "kite", "cup"};
    const auto dir = root / std::string(to_string(split));
    std::filesystem::create_directories(dir / "images");
    std::ofstream meta(dir / "metadata.jsonl", std::ios::binary);
    if (!meta) throw IoError("cannot write " + (dir / "metadata.jsonl").string());
    for (int k = 0; k < count; ++k) {
        const auto h = stable_hash64("synthetic:" + std::to_string(seed) + ":" + std::to_string(k));
        const int from = static_cast<int>(h % 6);
        const int to = static_cast<int>((from + 1 + (h >> 8) % 5) % 6);
        const char* object = kObjects[(h >> 16) % 4];
        auto draw = [&](int colour) {
            Image img(size, size);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    auto* p = img.pixel(x, y);
                    const bool inside = std::abs(x - size / 2) < size / 4 && std::abs(y - size / 2) < size / 4;
                    for (int c = 0; c < 3; ++c) {
                        p[c] = inside ? kRgb[colour][c]
                                      : static_cast<std::uint8_t>(90 + (x * 60) / size + (y * 40) / size + c * 10);
                    }
                }
            return img;
        };
        char id[16];
        std::snprintf(id, sizeof id, "syn%04d", k);
        const std::string src = std::string("images/") + id + "_source.png";
        const std::string gold = std::string("images/") + id + "_target.png";
        write_png(dir / src, draw(from));
        write_png(dir / gold, draw(to));
        meta << nlohmann::json{{"id", id},
                               {"source_image", src},
                               {"instruction", std::string("Make the ") + object + " " + kColours[to]},
                               {"gold_caption", std::string("A ") + kColours[to] + " " + object + " on a grey wall."},
                               {"gold_image", gold},
                               {"source_gold_caption",
                                std::string("A ") + kColours[from] + " " + object + " on a grey wall."}}
                    .dump()
             << "\n";
    }
}

std::vector<EditConfig> knob_grid(const EditConfig& base) {
    struct Row {
        int n;
        LockInMode lock;
    };
    const Row rows[] = {{1, LockInMode::none},
                        {1, LockInMode::generated_caption},
                        {2, LockInMode::generated_caption},
                        {4, LockInMode::generated_caption}};
    std::vector<EditConfig> out;
    for (int shots : {0, 1, 3})
        for (const auto& r : rows)
            for (auto style : {PromptStyle::terse, PromptStyle::detailed}) {
                EditConfig c = base;
                c.shots = shots;
                c.n_captions = r.n;
                c.lock_in_mode = r.lock;
                c.user_caption.reset();
                c.prompt_style = style;
                out.push_back(c);
            }
    return out;
}

std::vector<EditConfig> oracle_grid(const EditConfig& base) {
    std::vector<EditConfig> out;
    for (auto lock : {LockInMode::user_caption, LockInMode::generated_caption})
        for (auto style : {PromptStyle::terse, PromptStyle::detailed}) {
            EditConfig c = base;
            c.shots = 1;
            c.n_captions = 1;
            c.lock_in_mode = lock;
            c.user_caption.reset();
            c.prompt_style = style;
            out.push_back(c);
        }
    return out;
}

nlohmann::json reference_scores() {
    using nlohmann::json;
    auto row = [](double t, double ts, double i, double is) {
        return json{{"clip_t", {{"avg", t}, {"stdev", ts}}}, {"clip_i", {{"avg", i}, {"stdev", is}}}};
    };
    auto cited = [](double t, double i) { return json{{"clip_t", t}, {"clip_i", i}}; };
    return {{"knobs",
             {{"0shot-1cap-nolock", row(0.2751, 0.0007, 0.8021, 0.0013)},
              {"0shot-1cap-lock", row(0.2795, 0.0003, 0.8255, 0.0044)},
              {"0shot-2cap-lock", row(0.2796, 0.0001, 0.8329, 0.0003)},
              {"0shot-4cap-lock", row(0.2799, 0.0003, 0.8347, 0.0007)},
              {"1shot-1cap-nolock", row(0.2772, 0.0012, 0.8093, 0.0023)},
              {"1shot-1cap-lock", row(0.2817, 0.0003, 0.8310, 0.0002)},
              {"1shot-2cap-lock", row(0.2800, 0.0008, 0.8328, 0.0016)},
              {"1shot-4cap-lock", row(0.2797, 0.0002, 0.8348, 0.0009)},
              {"3shot-1cap-nolock", row(0.2762, 0.0003, 0.8119, 0.0032)},
              {"3shot-1cap-lock", row(0.2798, 0.0001, 0.8251, 0.0001)},
              {"3shot-2cap-lock", row(0.2797, 0.0000, 0.8348, 0.0010)},
              {"3shot-4cap-lock", row(0.2790, 0.0000, 0.8350, 0.0011)}}},
            {"oracle",
             {{"1shot-1cap-oracle", row(0.2845, 0.0005, 0.8636, 0.0015)},
              {"1shot-1cap-lock", row(0.2817, 0.0003, 0.8310, 0.0002)}}},
            {"baselines",
             {{"InstructPix2Pix", cited(0.2764, 0.8524)},
              {"HIVE", cited(0.2752, 0.8519)},
              {"HIVE+MagicBrush", cited(0.2812, 0.9189)},
              {"InstructPix2Pix+MagicBrush", cited(0.2781, 0.9332)}}}};
}

EvalReport run_grid(const Dataset& dataset, const std::vector<EditConfig>& configs, Pipeline& pipeline,
                    EvalEmbedder& scorer, const GridOptions& options) {
    // Pair configs by everything but the prompt style.
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::optional<std::size_t>, std::optional<std::size_t>>> pairs;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        EditConfig probe = configs[i];
        if (probe.lock_in_mode == LockInMode::user_caption) probe.user_caption = "placeholder";
        probe.validate();
        const auto key = pairing_key(configs[i]);
        if (!pairs.contains(key)) order.push_back(key);
        auto& slot = configs[i].prompt_style == PromptStyle::terse ? pairs[key].first : pairs[key].second;
        if (slot) throw ConfigError("duplicate config " + fingerprint(configs[i]));
        slot = i;
    }
    for (const auto& key : order) {
        const auto& [t, d] = pairs[key];
        if (!t || !d) {
            throw ConfigError("config " + fingerprint(configs[t ? *t : *d]) +
                              " lacks its counterpart in the other prompt style");
        }
    }

    std::map<std::string, ItemRow> done;
    std::ofstream checkpoint;
    if (options.checkpoint) {
        std::ifstream in(*options.checkpoint);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                ItemRow row{j.at("id"), j.at("fingerprint"), j.at("ok"), j.at("clip_t"), j.at("clip_i"),
                            j.at("stage"), j.at("error")};
                done[j.at("key").get<std::string>()] = row;
            } catch (const nlohmann::json::exception&) {
                // A torn final line from an interrupted run; that item is redone.
            }
        }
        checkpoint.open(*options.checkpoint, std::ios::app);
        if (!checkpoint) throw IoError("cannot append to checkpoint " + options.checkpoint->string());
    }

    EvalReport report;
    std::vector<std::vector<const ItemRow*>> per_config(configs.size());
    std::vector<ItemRow> rows;
    rows.reserve(dataset.triples.size() * configs.size());

    for (const auto& triple : dataset.triples) {
        std::optional<Image> source;
        std::optional<Eigen::VectorXd> gold_image, gold_text;
        for (std::size_t ci = 0; ci < configs.size(); ++ci) {
            EditConfig config = configs[ci];
            if (config.lock_in_mode == LockInMode::user_caption) config.user_caption = triple.source_gold_caption;
            config.rng_seed = configs[ci].rng_seed + stable_hash64(triple.id);
            const auto key = checkpoint_key(configs[ci], triple.id);

            ItemRow row;
            if (auto it = done.find(key); it != done.end()) {
                row = it->second;
            } else {
                row.id = triple.id;
                row.fingerprint = fingerprint(configs[ci]);
                try {
                    if (!source) source = read_png(triple.source_image);
                    const auto result = pipeline.edit({*source, triple.instruction, config});
                    try {
                        if (!gold_image) gold_image = scorer.embed_image(read_png(triple.gold_image));
                        if (!gold_text) gold_text = scorer.embed_text(triple.gold_caption);
                        const auto s = score_item(result.edited_image, *gold_image, *gold_text, scorer);
                        row.ok = true;
                        row.clip_t = s.clip_t;
                        row.clip_i = s.clip_i;
                    } catch (const std::exception& e) {
                        row.stage = "scoring";
                        row.error = e.what();
                    }
                } catch (const StageError& e) {
                    row.stage = e.stage();
                    row.error = e.what();
                } catch (const std::exception& e) {
                    row.stage = "request";
                    row.error = e.what();
                }
                if (checkpoint.is_open()) {
                    checkpoint << nlohmann::json{{"key", key},       {"id", row.id},         {"fingerprint", row.fingerprint},
                                                 {"ok", row.ok},     {"clip_t", row.clip_t}, {"clip_i", row.clip_i},
                                                 {"stage", row.stage}, {"error", row.error}}
                                      .dump()
                               << "\n"
                               << std::flush;
                }
            }
            if (options.on_item) options.on_item(row);
            rows.push_back(std::move(row));
        }
    }
    report.items = std::move(rows);
    for (std::size_t k = 0; k < report.items.size(); ++k) per_config[k % configs.size()].push_back(&report.items[k]);

    for (std::size_t ci = 0; ci < configs.size(); ++ci) {
        ConfigAggregate agg{configs[ci], fingerprint(configs[ci])};
        std::vector<double> t, i;
        for (const auto* row : per_config[ci]) {
            if (!row->ok) {
                ++agg.failures;
                continue;
            }
            t.push_back(row->clip_t);
            i.push_back(row->clip_i);
        }
        agg.items = static_cast<int>(t.size());
        agg.clip_t_mean = avg_stdev(t).avg;
        agg.clip_i_mean = avg_stdev(i).avg;
        report.configs.push_back(agg);
    }
    for (const auto& key : order) {
        const auto& [t, d] = pairs[key];
        PairedRow row{knob_label(configs[*t]), report.configs[*t], report.configs[*d], {}, {}};
        const double ct[] = {row.terse.clip_t_mean, row.detailed.clip_t_mean};
        const double cim[] = {row.terse.clip_i_mean, row.detailed.clip_i_mean};
        row.clip_t = avg_stdev(ct);
        row.clip_i = avg_stdev(cim);
        report.rows.push_back(row);
    }

    auto& m = report.metadata;
    m["similarity"] = "cosine similarity of evaluator embeddings, reported as CLIP-T (gold caption) and CLIP-I (gold image)";
    m["stdev_convention"] = "population standard deviation (divisor 2) across the two prompt styles";
    m["evaluator"] = {{"identifier", scorer.identifier()}, {"preprocessing", scorer.preprocessing()}};
    m["backends"] = pipeline.suite().identifiers();
    m["items"] = dataset.triples.size();
    m["warnings"] = dataset.warnings;
    m["failure_policy"] = "failed items are excluded from means and counted per config";
    m["seed_policy"] = "per-item seed = config rng_seed + first 8 bytes of SHA-256(item id)";
    m["configs"] = nlohmann::json::array();
    for (const auto& c : configs) m["configs"].push_back(c);
    m["reference"] = reference_scores();
    return report;
}

std::string format_report_tsv(const EvalReport& report) {
    std::ostringstream out;
    out << "knobs\tshots\tn_captions\tlock_in\tclip_t_avg\tclip_t_stdev\tclip_i_avg\tclip_i_stdev\t"
           "clip_t_terse\tclip_t_detailed\tclip_i_terse\tclip_i_detailed\titems\tfailures\n";
    for (const auto& r : report.rows) {
        const auto& c = r.terse.config;
        out << r.knobs << '\t' << c.shots << '\t' << c.n_captions << '\t' << to_string(c.lock_in_mode) << '\t'
            << fixed(r.clip_t.avg) << '\t' << fixed(r.clip_t.stdev) << '\t' << fixed(r.clip_i.avg) << '\t'
            << fixed(r.clip_i.stdev) << '\t' << fixed(r.terse.clip_t_mean) << '\t' << fixed(r.detailed.clip_t_mean)
            << '\t' << fixed(r.terse.clip_i_mean) << '\t' << fixed(r.detailed.clip_i_mean) << '\t'
            << r.terse.items + r.detailed.items << '\t' << r.terse.failures + r.detailed.failures << '\n';
    }
    return out.str();
}

std::string format_items_tsv(const EvalReport& report) {
    std::ostringstream out;
    out << "id\tconfig\tstatus\tclip_t\tclip_i\tstage\terror\n";
    for (const auto& r : report.items) {
        std::string error = r.error;
        for (auto& ch : error)
            if (ch == '\t' || ch == '\n') ch = ' ';
        out << r.id << '\t' << r.fingerprint << '\t' << (r.ok ? "ok" : "failed") << '\t'
            << (r.ok ? fixed(r.clip_t) : "") << '\t' << (r.ok ? fixed(r.clip_i) : "") << '\t' << r.stage << '\t'
            << error << '\n';
    }
    return out.str();
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, const std::string& content) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw IoError("cannot write " + (dir / name).string());
        out << content;
    };
    write("report.tsv", format_report_tsv(report));
    write("items.tsv", format_items_tsv(report));
    write("report_meta.json", report.metadata.dump(2) + "\n");
}

}  // namespace otf
