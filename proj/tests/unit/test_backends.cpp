// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <set>

#include "otfedit/encoding.hpp"
#include "otfedit/error.hpp"
#include "otfedit/fake_backends.hpp"
#include "otfedit/prompting.hpp"
#include "otfedit/remote_backends.hpp"
#include "support/fake_model_host.hpp"
#include "support/golden_texts.hpp"

using namespace otf;

namespace {

std::string matrix_digest(const ConditioningEmbedding<float>& m) {
    return sha256_hex(std::string_view(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(float)));
}

Image gradient_image(int w, int h) {
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto* p = img.pixel(x, y);
            p[0] = static_cast<std::uint8_t>(x * 255 / std::max(1, w - 1));
            p[1] = static_cast<std::uint8_t>(y * 255 / std::max(1, h - 1));
            p[2] = 90;
        }
    return img;
}

// Interface contract shared by the fakes and the remote adapters.
void check_suite_contract(BackendSuite& suite) {
    suite.validate();

    const auto shape = suite.text_encoder->shape();
    for (const char* text : {"", "A photo of a cat.", "a much longer caption with quite a few more words in it"}) {
        const auto e = suite.text_encoder->encode(text);
        CHECK(e.rows() == shape.tokens);
        CHECK(e.cols() == shape.width);
        CHECK(e.allFinite());
    }

    const int res = suite.latent_codec->native_resolution();
    const auto image = gradient_image(res, res);
    const auto latent = suite.latent_codec->encode(image);
    const auto decoded = suite.latent_codec->decode(latent);
    CHECK(decoded.width == image.width);
    CHECK(decoded.height == image.height);

    Conditioning<float> cond{suite.text_encoder->encode("a cat"), suite.text_encoder->encode(""), 7.5f};
    const auto train = suite.noise_predictor->training_schedule();
    const auto schedule = make_schedule<float>(train, 10);
    const auto eps = suite.noise_predictor->predict(latent, schedule.max_timestep(), cond);
    CHECK(eps.shape() == latent.shape());
    CHECK(eps.all_finite());

    CHECK_FALSE(suite.captioner->caption(solid_image(res, res, 30, 30, 200)).empty());

    DecodingParams params;
    const auto completion = suite.language_model->complete(golden::kFilledPrompt, params);
    const auto bundle = parse_captions(completion, 2);
    CHECK(bundle.before.size() == 2);
    CHECK(bundle.after.size() == 2);
}

}  // namespace

TEST_CASE("fake text encoder") {
    FakeTextEncoder encoder({77, 64});
    SUBCASE("deterministic") {
        CHECK(encoder.encode("A photo of a dog.") == encoder.encode("A photo of a dog."));
        CHECK(FakeTextEncoder({77, 64}).encode("x y") == encoder.encode("x y"));
    }
    SUBCASE("empty text has the declared shape") {
        const auto e = encoder.encode("");
        CHECK(e.rows() == 77);
        CHECK(e.cols() == 64);
    }
    SUBCASE("no collisions across a 1000-text corpus") {
        std::set<std::string> texts, digests;
        std::mt19937_64 rng(5);
        const char* words[] = {"a", "photo", "of", "the", "red", "cat", "dog", "on", "grass", "with", "hat", "snow"};
        while (texts.size() < 1000) {
            std::string t;
            const int n = static_cast<int>(rng() % 9);
            for (int i = 0; i < n; ++i) t += std::string(i ? " " : "") + words[rng() % 12];
            if (rng() % 7 == 0) t += "  ";  // whitespace-only variants are distinct texts too
            texts.insert(t);
        }
        for (const auto& t : texts) digests.insert(matrix_digest(encoder.encode(t)));
        CHECK(digests.size() == texts.size());
    }
    SUBCASE("causal rows: a shared prefix shares leading rows") {
        const auto a = encoder.encode("a red cat");
        const auto b = encoder.encode("a red dog");
        CHECK(a.row(1) == b.row(1));
        CHECK(a.row(2) == b.row(2));
        CHECK(a.row(3) != b.row(3));
    }
}

TEST_CASE("fake language model") {
    FakeLanguageModel lm;
    DecodingParams params;

    SUBCASE("filled prompt yields a parseable two-caption completion") {
        const auto out = lm.complete(golden::kFilledPrompt, params);
        const auto bundle = parse_captions(out, 2);
        CHECK(bundle.before.size() == 2);
        CHECK(bundle.after.size() == 2);
        CHECK(bundle.after[0].find("Make the cat a dog") != std::string::npos);
    }
    SUBCASE("lock-in prompt: exactly one generated before caption") {
        const auto out = lm.complete(golden::kLockInPrompt, params);
        const auto before_side = out.substr(0, out.find("After transformation"));
        CHECK(before_side.find("Caption 2:") != std::string::npos);
        CHECK(before_side.find("Caption 1:") == std::string::npos);
        CHECK(before_side.find("Caption 3:") == std::string::npos);
        const auto bundle = parse_captions(out, 2, std::string("A photo of an orange cat."));
        CHECK(bundle.before.front() == "A photo of an orange cat.");
        CHECK(bundle.before.size() == 2);
    }
    SUBCASE("every prompt shape the builder emits is understood") {
        FewShotExample shot{"Add a hat", {"a", "b", "c", "d"}, {"e", "f", "g", "h"}};
        const std::vector<FewShotExample> shots{shot, shot, shot};
        for (auto style : {PromptStyle::terse, PromptStyle::detailed})
            for (int n : {1, 2, 4})
                for (bool locked : {false, true}) {
                    std::optional<std::string> lock;
                    if (locked) lock = "A man on a bench.";
                    const auto prompt = build_prompt("Make it `odd', generate 3", n, shots, style, lock);
                    const auto bundle = parse_captions(lm.complete(prompt, params), n, lock);
                    CHECK(bundle.before.size() == static_cast<std::size_t>(n));
                    CHECK(bundle.after.size() == static_cast<std::size_t>(n));
                    CHECK(bundle.after[0].find("Make it `odd', generate 3") != std::string::npos);
                }
    }
    SUBCASE("seeded determinism") {
        params.rng_seed = 3;
        const auto a = lm.complete(golden::kFilledPrompt, params);
        CHECK(a == lm.complete(golden::kFilledPrompt, params));
        bool differs = false;
        for (std::uint64_t s = 4; s < 12; ++s) {
            params.rng_seed = s;
            differs |= lm.complete(golden::kFilledPrompt, params) != a;
        }
        CHECK(differs);
    }
    SUBCASE("malformed prompt is a structured error") {
        CHECK_THROWS_AS(lm.complete("Given the transformation `x', generate 2", params), BackendError);
        CHECK_THROWS_AS(lm.complete("Instruct: tell me a story\nOutput:", params), BackendError);
    }
    SUBCASE("token budget truncates the completion") {
        params.max_new_tokens = 5;
        const auto out = lm.complete(golden::kFilledPrompt, params);
        CHECK_THROWS_AS(parse_captions(out, 2), ParseError);
    }
}

TEST_CASE("fake noise predictor families") {
    const LatentShape shape{4, 8, 8};
    std::mt19937_64 rng(1);
    LatentTensor<float> x(shape);
    x.values().setRandom();
    FakeTextEncoder enc({8, 16});
    const auto cond_a = enc.encode("a cat");
    const auto cond_b = enc.encode("a dog");

    FakeNoisePredictor zero({FakeNoiseConfig::Family::constant, 0.0f});
    CHECK((zero.predict_conditional(x, 1, cond_a).values() == 0.0f).all());

    FakeNoisePredictor linear({FakeNoiseConfig::Family::linear, 0.0f, 0.3f});
    CHECK((linear.predict_conditional(x, 1, cond_a).values() == 0.3f * x.values()).all());

    FakeNoisePredictor conditioned;
    const auto ea = conditioned.predict_conditional(x, 1, cond_a);
    const auto eb = conditioned.predict_conditional(x, 1, cond_b);
    CHECK_FALSE(ea == eb);
    CHECK(ea == conditioned.predict_conditional(x, 1, cond_a));

    SUBCASE("classifier-free guidance combination") {
        const auto guided = conditioned.predict(x, 1, Conditioning<float>{cond_a, cond_b, 3.0f});
        const auto expected = eb.values() + 3.0f * (ea.values() - eb.values());
        CHECK((guided.values() - expected).abs().maxCoeff() < 1e-6f);
        CHECK(conditioned.predict(x, 1, Conditioning<float>{cond_a, cond_b, 1.0f}) == ea);
        CHECK(conditioned.predict(x, 1, Conditioning<float>{cond_a, std::nullopt, 7.5f}) == ea);
    }
}

TEST_CASE("fake codec and captioner") {
    FakeLatentCodec codec;
    const auto img = gradient_image(64, 48);
    const auto latent = codec.encode(img);
    CHECK(latent.shape() == LatentShape{4, 6, 8});
    const auto back = codec.decode(latent);
    CHECK(back.width == 64);
    CHECK(back.height == 48);
    CHECK(codec.decode(codec.encode(solid_image(16, 16, 10, 200, 30))) == solid_image(16, 16, 10, 200, 30));
    CHECK_THROWS_AS(codec.encode(gradient_image(30, 32)), ShapeError);

    FakeCaptioner captioner;
    CHECK(captioner.caption(solid_image(8, 8, 210, 20, 20)) == "A photo of a red scene.");
    CHECK(captioner.calls() == 1);
}

TEST_CASE("contract: fake suite") {
    auto suite = make_fake_suite({{16, 32}, 64, {}});
    check_suite_contract(suite);
}

TEST_CASE("contract: remote adapters against an in-process model host") {
    otf::testing::FakeModelHost host;
    auto suite = load_remote_suite(host.remote_options());
    check_suite_contract(suite);

    SUBCASE("encoder shape matches the host's declared metadata") {
        CHECK(suite.text_encoder->shape() == EmbeddingShape{16, 32});
    }
    SUBCASE("remote results equal the served fakes bit for bit") {
        CHECK(suite.text_encoder->encode("a cat") == host.fakes().text_encoder->encode("a cat"));
        const auto img = gradient_image(64, 64);
        CHECK(suite.latent_codec->encode(img) == host.fakes().latent_codec->encode(img));
    }
    SUBCASE("evaluator") {
        auto evaluator = load_eval_embedder(std::make_shared<ModelHostClient>(host.remote_options()));
        FakeEvalEmbedder local;
        CHECK(evaluator->embed_text("a black bear") == local.embed_text("a black bear"));
        CHECK(evaluator->preprocessing() == "fake host: none");
    }
}

TEST_CASE("remote load errors name the component") {
    otf::testing::FakeModelHost host;
    auto options = host.remote_options();

    SUBCASE("checkpoint mismatch") {
        options.models.captioner = "Salesforce/some-other-captioner";
        try {
            load_remote_suite(options);
            FAIL("expected LoadError");
        } catch (const LoadError& e) {
            CHECK(e.component() == "captioner");
        }
    }
    SUBCASE("unreachable host") {
        options.url = "http://127.0.0.1:1";
        try {
            load_remote_suite(options);
            FAIL("expected LoadError");
        } catch (const LoadError& e) {
            CHECK(e.component() == "model_host");
        }
    }
}

TEST_CASE("remote load error on incompatible shape metadata") {
    otf::testing::FakeModelHost::Options opts;
    opts.break_text_encoder_metadata = true;
    otf::testing::FakeModelHost host(opts);
    try {
        load_remote_suite(host.remote_options());
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(e.component() == "text_encoder");
    }
}

TEST_CASE("remote backend errors carry the component") {
    otf::testing::FakeModelHost host;
    auto suite = load_remote_suite(host.remote_options());
    try {
        suite.language_model->complete("no instruction here", DecodingParams{});
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.component() == "language_model");
    }
}
