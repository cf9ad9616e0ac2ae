// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "otfedit/eval.hpp"
#include "otfedit/fake_backends.hpp"

using namespace otf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("otfedit_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Fixed vectors keyed by image digest or text.
class StubScorer final : public EvalEmbedder {
public:
    std::map<std::string, Eigen::VectorXd> images, texts;
    Eigen::VectorXd embed_image(const Image& image) override { return images.at(image_digest(image)); }
    Eigen::VectorXd embed_text(std::string_view text) override { return texts.at(std::string(text)); }
    std::string identifier() const override { return "stub"; }
    std::string preprocessing() const override { return "none"; }
};

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    std::copy(v.begin(), v.end(), out.data());
    return out;
}

std::vector<FewShotExample> pool() {
    std::vector<FewShotExample> p;
    for (int i = 0; i < 3; ++i) {
        p.push_back({"Example " + std::to_string(i),
                     {"b" + std::to_string(i) + "a", "b1", "b2", "b3"},
                     {"a" + std::to_string(i) + "a", "a1", "a2", "a3"}});
    }
    return p;
}

EditConfig base_config() {
    EditConfig c;
    c.ddim_steps = 5;
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

}  // namespace

TEST_CASE("load_dataset") {
    TempDir dir("dataset");

    SUBCASE("empty directory: empty list with a warning") {
        const auto d = load_dataset(dir.path, Split::test);
        CHECK(d.triples.empty());
        CHECK_FALSE(d.warnings.empty());
    }
    SUBCASE("single well-formed record") {
        write_synthetic_dataset(dir.path, Split::dev, 1);
        const auto d = load_dataset(dir.path, Split::dev);
        REQUIRE(d.triples.size() == 1);
        CHECK(d.triples[0].id == "syn0000");
        CHECK(fs::exists(d.triples[0].gold_image));
        CHECK(d.warnings.empty());
    }
    SUBCASE("test split size differing from the official count is a warning") {
        write_synthetic_dataset(dir.path, Split::test, 3);
        const auto d = load_dataset(dir.path, Split::test);
        CHECK(d.triples.size() == 3);
        REQUIRE(d.warnings.size() == 1);
        CHECK(d.warnings[0].find("1053") != std::string::npos);
    }
    SUBCASE("problems are itemized") {
        write_synthetic_dataset(dir.path, Split::dev, 2);
        const auto meta = dir.path / "dev" / "metadata.jsonl";
        std::ifstream in(meta);
        std::string first;
        std::getline(in, first);
        in.close();
        auto missing_image = nlohmann::json::parse(first);
        missing_image["id"] = "x1";
        missing_image["gold_image"] = "images/nope.png";
        auto no_caption = nlohmann::json::parse(first);
        no_caption["id"] = "x2";
        no_caption.erase("gold_caption");
        write_text(dir.path / "dev" / "images" / "bad.png", "not a png");
        auto undecodable = nlohmann::json::parse(first);
        undecodable["id"] = "x3";
        undecodable["source_image"] = "images/bad.png";
        write_text(meta, first + "\n{oops\n" + missing_image.dump() + "\n" + no_caption.dump() + "\n" +
                             undecodable.dump() + "\n" + first + "\n");
        try {
            load_dataset(dir.path, Split::dev);
            FAIL("expected DatasetError");
        } catch (const DatasetError& e) {
            CHECK(e.items().size() == 5);
            CHECK(e.items()[0].rfind("line 2", 0) == 0);
            CHECK(e.items()[4].find("duplicate") != std::string::npos);
        }
    }
    SUBCASE("missing root") { CHECK_THROWS_AS(load_dataset(dir.path / "absent", Split::dev), DatasetError); }
}

TEST_CASE("score_item: hand-computed cosines") {
    const Image edited = solid_image(4, 4, 1, 2, 3);
    const Image gold = solid_image(4, 4, 9, 9, 9);
    StubScorer scorer;
    scorer.images[image_digest(edited)] = vec({1, 0});
    scorer.images[image_digest(gold)] = vec({0, 1});
    scorer.texts["gold caption"] = vec({1, 0});

    const auto s = score_item(edited, scorer.images[image_digest(gold)], scorer.texts["gold caption"], scorer);
    CHECK(s.clip_i == 0.0);
    CHECK(s.clip_t == 1.0);

    SUBCASE("random stub vectors against a long-double oracle") {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> normal;
        for (int trial = 0; trial < 500; ++trial) {
            const int d = 2 + static_cast<int>(rng() % 64);
            Eigen::VectorXd a(d), b(d);
            for (int k = 0; k < d; ++k) {
                a[k] = normal(rng);
                b[k] = normal(rng);
            }
            long double dot = 0, na = 0, nb = 0;
            for (int k = 0; k < d; ++k) {
                dot += static_cast<long double>(a[k]) * b[k];
                na += static_cast<long double>(a[k]) * a[k];
                nb += static_cast<long double>(b[k]) * b[k];
            }
            const double expected = static_cast<double>(dot / std::sqrt(na * nb));
            CHECK(std::abs(cosine_similarity(a, b) - expected) <= 1e-9);
        }
    }
    SUBCASE("self-similarity and failure") {
        CHECK(std::abs(cosine_similarity(vec({0.3, -2, 5}), vec({0.3, -2, 5})) - 1.0) <= 1e-6);
        CHECK(cosine_similarity(vec({0, 3}), vec({-2, 0})) == 0.0);
        CHECK_THROWS_AS(cosine_similarity(vec({0, 0}), vec({1, 0})), NumericError);
    }
    SUBCASE("edited equal to gold under the fake evaluator") {
        TempDir dir("selfsim");
        write_synthetic_dataset(dir.path, Split::dev, 1);
        const auto d = load_dataset(dir.path, Split::dev);
        FakeEvalEmbedder fake;
        const auto self = score_item(read_png(d.triples[0].gold_image), d.triples[0], fake);
        CHECK(std::abs(self.clip_i - 1.0) <= 1e-6);
    }
}

TEST_CASE("avg/stdev across the two prompt styles") {
    const double pair[] = {0.27, 0.29};
    const auto r = avg_stdev(pair);
    CHECK(std::abs(r.avg - 0.28) <= 1e-12);
    CHECK(std::abs(r.stdev - 0.01) <= 1e-12);
    const double same[] = {0.4, 0.4};
    CHECK(avg_stdev(same).avg == 0.4);
    CHECK(avg_stdev(same).stdev == 0.0);
}

TEST_CASE("grids") {
    const auto t1 = knob_grid(base_config());
    CHECK(t1.size() == 24);
    const auto refs = reference_scores()["knobs"];
    std::set<std::string> labels;
    for (const auto& c : t1) {
        labels.insert(knob_label(c));
        CHECK(refs.contains(knob_label(c)));
    }
    CHECK(labels.size() == 12);
    const auto t2 = oracle_grid(base_config());
    CHECK(t2.size() == 4);
    for (const auto& c : t2) CHECK(reference_scores()["oracle"].contains(knob_label(c)));
    CHECK(reference_scores()["baselines"]["InstructPix2Pix"]["clip_t"] == 0.2764);
    CHECK(reference_scores()["baselines"]["HIVE"]["clip_i"] == 0.8519);
}

TEST_CASE("run_grid on the fake suite") {
    TempDir dir("grid");
    write_synthetic_dataset(dir.path, Split::test, 10, 3);
    auto dataset = load_dataset(dir.path, Split::test);
    auto configs = oracle_grid(base_config());
    FakeEvalEmbedder scorer;

    auto run = [&](const Dataset& d, GridOptions options = {}) {
        auto suite = make_fake_suite({{8, 16}, 64, {}});
        Pipeline pipeline(suite, pool());
        return run_grid(d, configs, pipeline, scorer, options);
    };

    const auto a = run(dataset);
    const auto b = run(dataset);
    CHECK(format_report_tsv(a) == format_report_tsv(b));
    CHECK(format_items_tsv(a) == format_items_tsv(b));
    CHECK(a.metadata == b.metadata);
    CHECK(a.rows.size() == 2);
    CHECK(a.configs.size() == 4);
    CHECK(a.items.size() == 40);
    for (const auto& row : a.items) {
        CHECK(row.ok);
        CHECK(row.clip_t >= -1.0);
        CHECK(row.clip_t <= 1.0);
    }
    for (const auto& r : a.rows) {
        const double t[] = {r.terse.clip_t_mean, r.detailed.clip_t_mean};
        CHECK(r.clip_t.avg == avg_stdev(t).avg);
    }

    SUBCASE("aggregation is invariant to item order") {
        auto shuffled = dataset;
        std::mt19937_64 rng(4);
        std::shuffle(shuffled.triples.begin(), shuffled.triples.end(), rng);
        CHECK(format_report_tsv(run(shuffled)) == format_report_tsv(a));
    }
    SUBCASE("oracle rows never call the captioner") {
        auto suite = make_fake_suite({{8, 16}, 64, {}});
        auto captioner = std::dynamic_pointer_cast<FakeCaptioner>(suite.captioner);
        Pipeline pipeline(suite, pool());
        std::vector<EditConfig> oracle{configs[0], configs[1]};
        REQUIRE(oracle[0].lock_in_mode == LockInMode::user_caption);
        run_grid(dataset, oracle, pipeline, scorer);
        CHECK(captioner->calls() == 0);
    }
    SUBCASE("checkpoint resume reproduces the report") {
        const auto checkpoint = dir.path / "checkpoint.jsonl";
        const auto full = run(dataset, {checkpoint, {}});
        CHECK(format_report_tsv(full) == format_report_tsv(a));

        std::ifstream in(checkpoint);
        std::vector<std::string> lines;
        for (std::string l; std::getline(in, l);) lines.push_back(l);
        REQUIRE(lines.size() == 40);
        std::string partial;
        for (int k = 0; k < 17; ++k) partial += lines[k] + "\n";
        partial += lines[17].substr(0, 25);  // torn write
        write_text(checkpoint, partial);

        auto suite = make_fake_suite({{8, 16}, 64, {}});
        auto lm = std::dynamic_pointer_cast<FakeLanguageModel>(suite.language_model);
        Pipeline pipeline(suite, pool());
        const auto resumed = run_grid(dataset, configs, pipeline, scorer, {checkpoint, {}});
        CHECK(lm->calls() == 40 - 17);
        CHECK(format_report_tsv(resumed) == format_report_tsv(a));
        CHECK(format_items_tsv(resumed) == format_items_tsv(a));
    }
    SUBCASE("unpaired configs are rejected") {
        configs.pop_back();
        CHECK_THROWS_AS(run(dataset), ConfigError);
    }
    SUBCASE("failed items are excluded and counted") {
        class Broken final : public Captioner {
        public:
            std::string caption(const Image&) override { throw BackendError("captioner", "broken"); }
            std::string identifier() const override { return "broken"; }
        };
        auto suite = make_fake_suite({{8, 16}, 64, {}});
        suite.captioner = std::make_shared<Broken>();
        Pipeline pipeline(suite, pool());
        const auto r = run_grid(dataset, configs, pipeline, scorer);
        CHECK(r.rows[0].terse.failures == 0);  // oracle rows skip the captioner
        CHECK(r.rows[1].terse.failures == 10);
        CHECK(r.rows[1].terse.items == 0);
        CHECK(std::isnan(r.rows[1].clip_t.avg));
        for (const auto& row : r.items)
            if (!row.ok) CHECK(row.stage == "captioning");
    }
    SUBCASE("report files") {
        write_report(dir.path / "out", a);
        CHECK(fs::exists(dir.path / "out" / "report.tsv"));
        CHECK(fs::exists(dir.path / "out" / "items.tsv"));
        std::ifstream meta(dir.path / "out" / "report_meta.json");
        const auto j = nlohmann::json::parse(meta);
        CHECK(j["stdev_convention"].get<std::string>().find("population") != std::string::npos);
        CHECK(j["reference"]["baselines"]["InstructPix2Pix"]["clip_i"] == 0.8524);
    }
}
