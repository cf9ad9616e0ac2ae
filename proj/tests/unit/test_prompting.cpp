// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <random>
#include <set>

#include "otfedit/error.hpp"
#include "otfedit/prompting.hpp"
#include "support/golden_texts.hpp"
#include "support/random.hpp"

using namespace otf;

namespace {

std::vector<FewShotExample> demo_pool() {
    std::vector<FewShotExample> pool;
    for (int i = 0; i < 6; ++i) {
        FewShotExample e{"transformation " + std::to_string(i), {}, {}};
        for (int c = 0; c < 4; ++c) {
            e.before_captions.push_back("before " + std::to_string(i) + "." + std::to_string(c));
            e.after_captions.push_back("after " + std::to_string(i) + "." + std::to_string(c));
        }
        pool.push_back(e);
    }
    return pool;
}

bool contains_reserved(const std::string& s) {
    return s.find("Caption") != std::string::npos || s.find("transformation") != std::string::npos ||
           s.find("Instruct:") != std::string::npos;
}

}  // namespace

TEST_CASE("templates carry each placeholder exactly once") {
    for (auto style : {PromptStyle::terse, PromptStyle::detailed}) {
        const auto body = prompt_template(style).body;
        for (auto ph : {PromptTemplate::kTransformation, PromptTemplate::kNumber}) {
            const auto first = body.find(ph);
            REQUIRE(first != std::string_view::npos);
            CHECK(body.find(ph, first + 1) == std::string_view::npos);
        }
    }
}

TEST_CASE("build_prompt reproduces the filled terse prompt byte for byte") {
    CHECK(build_prompt("Make the cat a dog", 2, {}, PromptStyle::terse) == golden::kFilledPrompt);
}

TEST_CASE("build_prompt reproduces the lock-in prompt byte for byte") {
    CHECK(build_prompt("Make it a dog", 2, {}, PromptStyle::terse, std::string("A photo of an orange cat.")) ==
          golden::kLockInPrompt);
}

TEST_CASE("build_prompt: single caption without shots or lock-in") {
    const auto p = build_prompt("Add a hat", 1, {}, PromptStyle::terse);
    CHECK(p ==
          "Instruct: Given the transformation `Add a hat', generate 1\n"
          "image captions for before and after the transformation.\n"
          "Output: Before transformation\n\nCaption 1:");
}

TEST_CASE("build_prompt: single caption with lock-in pins the before side") {
    const auto p = build_prompt("Add a hat", 1, {}, PromptStyle::terse, std::string("A man on a bench."));
    CHECK(p.ends_with("Caption 1: A man on a bench.\n\nAfter transformation\n\nCaption 1:"));
}

TEST_CASE("build_prompt: detailed style") {
    const auto p = build_prompt("Add a hat", 4, {}, PromptStyle::detailed);
    CHECK(p ==
          "Instruct: Employing the specified method `Add a hat', craft 4 pairs of descriptive captions delineating "
          "the images both prior to and following the application of the transformation process, elucidating the "
          "changes brought about.\nOutput: Before transformation\n\nCaption 1:");
}

TEST_CASE("build_prompt: shots render as completed interactions separated by a blank line") {
    const auto pool = demo_pool();
    const std::vector<FewShotExample> shots{pool[0]};
    const auto p = build_prompt("Add a hat", 2, shots, PromptStyle::terse);
    const std::string expected_shot =
        "Instruct: Given the transformation `transformation 0', generate 2\n"
        "image captions for before and after the transformation.\n"
        "Output: Before transformation\n\n"
        "Caption 1: before 0.0\nCaption 2: before 0.1\n\n"
        "After transformation\n\n"
        "Caption 1: after 0.0\nCaption 2: after 0.1\n\n";
    CHECK(p == expected_shot + build_prompt("Add a hat", 2, {}, PromptStyle::terse));
}

TEST_CASE("build_prompt: argument errors") {
    CHECK_THROWS_AS(build_prompt("x", 3, {}, PromptStyle::terse), ConfigError);
    CHECK_THROWS_AS(build_prompt("", 2, {}, PromptStyle::terse), ConfigError);
    FewShotExample thin{"t", {"a"}, {"b"}};
    const std::vector<FewShotExample> shots{thin};
    CHECK_THROWS_AS(build_prompt("x", 2, shots, PromptStyle::terse), ConfigError);
    CHECK_THROWS_AS(build_prompt("x", 2, {}, PromptStyle::terse, std::string("two\nlines")), ConfigError);
}

TEST_CASE("parse_captions recovers the example output lists") {
    const std::vector<std::string> before{"A photo of a tabby cat sleeping.", "A cat playing with a ball of yarn."};
    const std::vector<std::string> after{"A photo of a cute dog.", "A dog chewing on a bone."};

    SUBCASE("full text") {
        const auto b = parse_captions(golden::kExampleOutput, 2);
        CHECK(b.before == before);
        CHECK(b.after == after);
        CHECK_FALSE(b.locked_first_before.has_value());
    }
    SUBCASE("continuation after the prompt") {
        const std::string full(golden::kExampleOutput);
        const auto b = parse_captions(full.substr(golden::kFilledPrompt.size()), 2);
        CHECK(b.before == before);
        CHECK(b.after == after);
    }
}

TEST_CASE("parse_captions: one caption per side") {
    const auto b = parse_captions(" A red car.\n\nAfter transformation\n\nCaption 1: A blue car.\n", 1);
    CHECK(b.before == std::vector<std::string>{"A red car."});
    CHECK(b.after == std::vector<std::string>{"A blue car."});
}

TEST_CASE("parse_captions: lock-in continuation") {
    const std::optional<std::string> lock = "A photo of an orange cat.";
    const auto b = parse_captions("\nCaption 2: A cat on a sofa.\n\nAfter transformation\n\nCaption 1: A photo of a "
                                  "dog.\nCaption 2: A dog on a sofa.\n\nInstruct: something else",
                                  2, lock);
    CHECK(b.before == std::vector<std::string>{*lock, "A cat on a sofa."});
    CHECK(b.after == std::vector<std::string>{"A photo of a dog.", "A dog on a sofa."});
    CHECK(b.locked_first_before == lock);

    const auto single = parse_captions(" A photo of a dog.\nCaption 2: rambling", 1, lock);
    CHECK(single.before == std::vector<std::string>{*lock});
    CHECK(single.after == std::vector<std::string>{"A photo of a dog."});
}

TEST_CASE("parse_captions: trailing text after the last caption is discarded") {
    const auto b = parse_captions(
        " a\nCaption 2: b\n\nAfter transformation\n\nCaption 1: c\nCaption 2: d\nCaption 3: e\n\nInstruct: Given", 2);
    CHECK(b.after == std::vector<std::string>{"c", "d"});
}

TEST_CASE("parse_captions: malformed completions") {
    auto expect_parse_error = [](std::string_view text, int n) {
        try {
            parse_captions(text, n);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.raw_completion() == text);
        }
    };
    expect_parse_error(" a cat\nCaption 2: another cat\n", 2);                                   // no sentinel
    expect_parse_error(" a cat\n\nAfter transformation\n\nCaption 1: a dog\n", 2);                // short
    expect_parse_error(" a cat\nCaption 2:\n\nAfter transformation\n\nCaption 1: x\nCaption 2: y", 2);  // empty
    expect_parse_error("\n\nAfter transformation\n\nCaption 1: a dog", 1);                         // empty before
    CHECK_THROWS_AS(parse_captions("x", 5), ConfigError);
}

TEST_CASE("property: parse(render(bundle)) == bundle") {
    std::mt19937_64 rng(42);
    int checked = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        const int n = std::array{1, 2, 4}[rng() % 3];
        const bool locked = rng() % 2;
        CaptionBundle bundle;
        for (int i = 0; i < n; ++i) {
            bundle.before.push_back(otf::testing::random_words(rng, 1, 8));
            bundle.after.push_back(otf::testing::random_words(rng, 1, 8));
        }
        if (std::any_of(bundle.before.begin(), bundle.before.end(), contains_reserved) ||
            std::any_of(bundle.after.begin(), bundle.after.end(), contains_reserved))
            continue;
        std::optional<std::string> lock;
        if (locked) {
            lock = bundle.before[0];
            bundle.locked_first_before = lock;
            bundle.lock_in_source = LockInSource::user_provided;
        }
        CHECK(parse_captions(render_output(bundle.before, bundle.after), n, lock) == bundle);
        ++checked;
    }
    CHECK(checked > 1900);
}

TEST_CASE("property: build_prompt is injective in the transformation") {
    std::mt19937_64 rng(7);
    std::set<std::string> transformations, prompts;
    for (int i = 0; i < 500; ++i) {
        const auto t = otf::testing::random_words(rng, 1, 5);
        if (!transformations.insert(t).second) continue;
        prompts.insert(build_prompt(t, 2, {}, PromptStyle::detailed));
    }
    CHECK(prompts.size() == transformations.size());
}

TEST_CASE("property: lock-in caption always comes back as before[0]") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = std::array{1, 2, 4}[rng() % 3];
        std::vector<std::string> before, after;
        for (int i = 0; i < n; ++i) {
            before.push_back("b" + std::to_string(i));
            after.push_back("a" + std::to_string(i));
        }
        const std::string lock = "locked " + otf::testing::random_words(rng, 1, 4);
        if (contains_reserved(lock)) continue;
        CHECK(parse_captions(render_output(before, after), n, lock).before.front() == lock);
    }
}

TEST_CASE("property: each extra shot strictly lengthens the prompt") {
    const auto pool = demo_pool();
    for (auto style : {PromptStyle::terse, PromptStyle::detailed}) {
        for (int n : {1, 2, 4}) {
            std::size_t previous = 0;
            for (std::size_t k = 0; k <= pool.size(); ++k) {
                const std::span<const FewShotExample> shots(pool.data(), k);
                const auto len = build_prompt("Make it snow", n, shots, style).size();
                CHECK(len > previous);
                previous = len;
            }
        }
    }
}

TEST_CASE("sample_few_shot") {
    const auto pool = demo_pool();
    SUBCASE("zero shots") { CHECK(sample_few_shot(pool, 0, 2, 1).empty()); }
    SUBCASE("one shot keeps all four captions") {
        const auto s = sample_few_shot(pool, 1, 4, 123);
        REQUIRE(s.size() == 1);
        CHECK(s[0].before_captions.size() == 4);
        const auto it = std::find_if(pool.begin(), pool.end(),
                                     [&](const auto& e) { return e.transformation == s[0].transformation; });
        REQUIRE(it != pool.end());
        CHECK(s[0] == *it);
    }
    SUBCASE("fixed seed is deterministic, entries distinct, captions trimmed") {
        const auto a = sample_few_shot(pool, 3, 2, 99);
        const auto b = sample_few_shot(pool, 3, 2, 99);
        CHECK(a == b);
        REQUIRE(a.size() == 3);
        std::set<std::string> names;
        for (const auto& e : a) {
            names.insert(e.transformation);
            CHECK(e.before_captions.size() == 2);
            CHECK(e.after_captions.size() == 2);
        }
        CHECK(names.size() == 3);
        bool any_differs = false;
        for (std::uint64_t seed = 0; seed < 20; ++seed) any_differs |= sample_few_shot(pool, 3, 2, seed) != a;
        CHECK(any_differs);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(sample_few_shot(std::span(pool.data(), 2), 3, 2, 0), ConfigError);
        CHECK_THROWS_AS(sample_few_shot(pool, 2, 2, 0), ConfigError);
    }
}

TEST_CASE("few-shot pool file validation") {
    const std::string good =
        R"({"transformation": "Add snow", "before_captions": ["a","b","c","d"], "after_captions": ["e","f","g","h"]})"
        "\n\n";
    CHECK(parse_few_shot_pool(good).size() == 1);

    const std::string bad = good +
                            R"({"transformation": "x", "before_captions": ["a"], "after_captions": ["e","f","g","h"]})"
                            "\nnot json\n";
    try {
        parse_few_shot_pool(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("line 4") != std::string::npos);
    }
}

TEST_CASE("bundled few-shot pool is valid") {
    const auto pool = load_few_shot_pool(OTFEDIT_DATA_DIR "/fewshot_pool.jsonl");
    CHECK(pool.size() >= 3);
}
