// Copyright (C) 2026 The otfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <filesystem>
#include <random>

#include "otfedit/direction.hpp"

using namespace otf;
using Mat = Embedding<double>;

namespace {

Mat row(std::initializer_list<double> values) {
    Mat m(1, static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) m(0, i++) = v;
    return m;
}

std::vector<Mat> random_set(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::vector<Mat> set(1 + rng() % 5);
    for (auto& m : set) {
        m = Mat::Random(rows, cols);
        m *= static_cast<double>(1 + rng() % 10);
    }
    return set;
}

}  // namespace

TEST_CASE("compute_direction examples") {
    SUBCASE("single pair") {
        const auto d = compute_direction(std::vector{row({1, 0})}, std::vector{row({0, 1})});
        CHECK(d.matrix == row({-1, 1}));
    }
    SUBCASE("identical sets give zero") {
        const std::vector sets{row({3, -2}), row({0.5, 7})};
        CHECK(compute_direction(sets, sets).matrix.isZero(0.0));
    }
    SUBCASE("hand-computed means") {
        // means (0.5, 0.5) and (1, 1)
        const auto d = compute_direction(std::vector{row({1, 0}), row({0, 1})}, std::vector{row({2, 2}), row({0, 0})});
        CHECK(d.matrix == row({0.5, 0.5}));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(compute_direction(std::vector<Mat>{}, std::vector{row({1})}), ShapeError);
        CHECK_THROWS_AS(compute_direction(std::vector{row({1, 2})}, std::vector{row({1})}), ShapeError);
        CHECK_THROWS_AS(compute_direction(std::vector{row({1, 2}), row({1})}, std::vector{row({1, 2})}), ShapeError);
    }
}

TEST_CASE("apply_direction examples") {
    const Mat base = row({1, 1});
    CHECK(apply_direction(base, DirectionEmbedding<double>{row({0, 0})}) == base);
    CHECK(apply_direction(base, DirectionEmbedding<double>{row({4, -9})}, 0.0) == base);
    CHECK(apply_direction(base, DirectionEmbedding<double>{row({0.5, -0.5})}, 2.0) == row({2, 0}));
    CHECK_THROWS_AS(apply_direction(base, DirectionEmbedding<double>{row({1, 2, 3})}), ShapeError);
    CHECK_THROWS_AS(apply_direction(base, DirectionEmbedding<double>{row({1, 2})}, std::nan("")), NumericError);
}

TEST_CASE("property: direction algebra over randomized embedding sets") {
    std::mt19937_64 rng(2024);
    std::srand(2024);
    constexpr int kTrials = 1000;
    for (int trial = 0; trial < kTrials; ++trial) {
        const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng() % 6);
        const Eigen::Index cols = 1 + static_cast<Eigen::Index>(rng() % 8);
        const auto a = random_set(rng, rows, cols);
        const auto b = random_set(rng, rows, cols);
        const auto ab = compute_direction(a, b).matrix;
        const double tol = 1e-12 * std::max(1.0, ab.cwiseAbs().maxCoeff());

        // antisymmetry
        CHECK((ab + compute_direction(b, a).matrix).cwiseAbs().maxCoeff() <= tol);

        // translation invariance
        const Mat shift = Mat::Random(rows, cols) * 50.0;
        auto a2 = a, b2 = b;
        for (auto& m : a2) m += shift;
        for (auto& m : b2) m += shift;
        CHECK((compute_direction(a2, b2).matrix - ab).cwiseAbs().maxCoeff() <= 1e-10);

        // duplicating every element keeps the means
        auto a3 = a, b3 = b;
        a3.insert(a3.end(), a.begin(), a.end());
        b3.insert(b3.end(), b.begin(), b.end());
        CHECK((compute_direction(a3, b3).matrix - ab).cwiseAbs().maxCoeff() <= tol);

        // zero identity
        CHECK(compute_direction(a, a).matrix.isZero(0.0));
        const Mat base = Mat::Random(rows, cols);
        CHECK(apply_direction(base, DirectionEmbedding<double>{Mat::Zero(rows, cols)}, 3.0) == base);

        // linear in strength
        const DirectionEmbedding<double> d{ab};
        const double s1 = (static_cast<double>(rng() % 2000) - 1000.0) / 250.0;
        const double s2 = (static_cast<double>(rng() % 2000) - 1000.0) / 250.0;
        const Mat lhs = apply_direction(base, d, s1 + s2) - base;
        const Mat rhs = (apply_direction(base, d, s1) - base) + (apply_direction(base, d, s2) - base);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, lhs.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("direction tensor file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "otfedit_direction_test.otft";
    Embedding<float> m(3, 5);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(i) * 0.25f - 1.0f;
    save_direction(path, {m});
    const auto back = load_direction(path);
    CHECK(back.matrix == m);

    const auto bytes = encode_tensor_bytes({{2, 2}, {1, 2, 3, 4}});
    CHECK(bytes.size() == 4 + 4 + 4 + 2 * 8 + 4 * 4);
    CHECK(bytes.substr(0, 4) == "OTFT");
    CHECK_THROWS_AS(decode_tensor_bytes(bytes.substr(0, bytes.size() - 1)), IoError);
    CHECK_THROWS_AS(decode_tensor_bytes("XXXX"), IoError);
    CHECK_THROWS_AS(encode_tensor_bytes({{2, 3}, {1, 2}}), ShapeError);
    std::filesystem::remove(path);
}
