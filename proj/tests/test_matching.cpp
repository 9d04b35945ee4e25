#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fovsr/patch_match.hpp"
#include "test_helpers.hpp"

using namespace fovsr;

namespace {

std::vector<Patch<float>> make_grid(int grid, int side, std::uint32_t seed) {
    std::vector<Patch<float>> patches;
    for (int r = 0; r < grid; ++r)
        for (int c = 0; c < grid; ++c) {
            Patch<float> p;
            p.pixels = fovsr::testing::random_image<float>(side, side, seed + r * grid + c);
            p.row = r;
            p.col = c;
            patches.push_back(std::move(p));
        }
    return patches;
}

} // namespace

TEST_CASE("similarity basics") {
    Vec<double> v(3);
    v << 1, -2, 0.5;

    CHECK(similarity<double>(v, v).score == doctest::Approx(1.0));
    Vec<double> nv = -v;
    CHECK(similarity<double>(v, nv).score == doctest::Approx(-1.0));

    Vec<double> e1(2), e2(2);
    e1 << 1, 0;
    e2 << 0, 1;
    CHECK(similarity<double>(e1, e2).score == doctest::Approx(0.0));

    SUBCASE("zero vectors flag as degenerate with score 0") {
        Vec<double> z = Vec<double>::Zero(3);
        auto s = similarity<double>(z, v);
        CHECK(s.score == 0.0);
        CHECK(s.degenerate);
        CHECK_FALSE(similarity<double>(v, v).degenerate);
    }

    SUBCASE("scale invariance and symmetry") {
        Rng rng(41);
        Vec<double> a(5), b(5);
        for (int i = 0; i < 5; ++i) {
            a(i) = rng.uniform(-1, 1);
            b(i) = rng.uniform(-1, 1);
        }
        Vec<double> ka = 3.7 * a;
        CHECK(similarity<double>(a, b).score == doctest::Approx(similarity<double>(ka, b).score));
        CHECK(similarity<double>(a, b).score == doctest::Approx(similarity<double>(b, a).score));
        CHECK(similarity<double>(a, b).score >= -1.0);
        CHECK(similarity<double>(a, b).score <= 1.0);
    }

    SUBCASE("length mismatch rejected") {
        Vec<double> short_v(2);
        short_v << 1, 2;
        CHECK_THROWS_AS(similarity<double>(v, short_v), std::invalid_argument);
    }
}

TEST_CASE("backbone embeddings are deterministic and self-similar") {
    auto bb = Backbone<float>::fixed_random();
    auto p = fovsr::testing::random_image<float>(48, 48, 7);

    auto e1 = bb.embed(p);
    auto e2 = bb.embed(p);
    REQUIRE(e1.size() == bb.embedding_dim());
    CHECK((e1 - e2).cwiseAbs().maxCoeff() == 0.0f); // bitwise repeatable
    CHECK(e1.allFinite());
    CHECK(similarity<float>(e1, e2).score == doctest::Approx(1.0));

    SUBCASE("small patches are upscaled internally, not rejected") {
        auto tiny = fovsr::testing::random_image<float>(16, 16, 8);
        auto e = bb.embed(tiny);
        CHECK(e.size() == bb.embedding_dim());
        CHECK(e.allFinite());
    }

    SUBCASE("degenerate patch rejected") {
        Image<float> empty(0, 0);
        CHECK_THROWS_AS(bb.embed(empty), std::invalid_argument);
    }

    SUBCASE("two random patches score like the vector-math oracle") {
        auto q = fovsr::testing::random_image<float>(48, 48, 9);
        auto eq = bb.embed(q);
        double dot = 0, na = 0, nb = 0;
        for (Eigen::Index i = 0; i < e1.size(); ++i) {
            dot += double(e1(i)) * double(eq(i));
            na += double(e1(i)) * double(e1(i));
            nb += double(eq(i)) * double(eq(i));
        }
        const double oracle = dot / (std::sqrt(na) * std::sqrt(nb));
        CHECK(similarity<float>(e1, eq).score == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("match_patches returns the exhaustive argmax per wide patch") {
    auto bb = Backbone<float>::fixed_random();
    auto wide = make_grid(8, 16, 100);
    auto narrow = make_grid(8, 16, 900);

    auto matches = match_patches(bb, wide, narrow, 0.7);
    REQUIRE(matches.size() == 64);

    // independent exhaustive oracle over the full 64x64 similarity matrix
    std::vector<Vec<float>> we, ne;
    for (auto& p : wide) we.push_back(bb.embed(p.pixels));
    for (auto& p : narrow) ne.push_back(bb.embed(p.pixels));

    for (int i = 0; i < 64; ++i) {
        double best = -2.0;
        int best_j = -1;
        for (int j = 0; j < 64; ++j) {
            double dot = 0, na = 0, nb = 0;
            for (Eigen::Index k = 0; k < we[i].size(); ++k) {
                dot += double(we[i](k)) * double(ne[j](k));
                na += double(we[i](k)) * double(we[i](k));
                nb += double(ne[j](k)) * double(ne[j](k));
            }
            const double s = dot / (std::sqrt(na) * std::sqrt(nb));
            if (s > best) {
                best = s;
                best_j = j;
            }
        }
        CHECK(matches[i].wide_row == wide[i].row);
        CHECK(matches[i].wide_col == wide[i].col);
        CHECK(matches[i].narrow_row == narrow[best_j].row);
        CHECK(matches[i].narrow_col == narrow[best_j].col);
        CHECK(matches[i].score == doctest::Approx(best).epsilon(1e-6));
        CHECK(matches[i].above_threshold == (matches[i].score >= 0.7));
    }
}

TEST_CASE("identical grids match themselves with score 1") {
    auto bb = Backbone<float>::fixed_random();
    auto grid = make_grid(4, 16, 555); // smaller grid keeps this quick
    auto matches = match_patches(bb, grid, grid, 0.7);
    REQUIRE(matches.size() == 16);
    for (auto& m : matches) {
        CHECK(m.score == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(m.above_threshold);
        // self is always among the score-1 candidates; random content makes it unique
        CHECK(m.narrow_row == m.wide_row);
        CHECK(m.narrow_col == m.wide_col);
    }
}

TEST_CASE("match_patches input validation") {
    auto bb = Backbone<float>::fixed_random();
    auto grid = make_grid(2, 16, 1);
    auto shorter = make_grid(1, 16, 2);
    CHECK_THROWS_AS(match_patches(bb, grid, shorter, 0.7), std::invalid_argument);
    CHECK_THROWS_AS(match_patches(bb, grid, grid, 1.5), std::invalid_argument);
    std::vector<Patch<float>> empty;
    CHECK_THROWS_AS(match_patches(bb, empty, empty, 0.7), std::invalid_argument);
}
