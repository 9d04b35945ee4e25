#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fovsr/data_pipeline.hpp"
#include "fovsr/metrics.hpp"
#include "test_helpers.hpp"

using namespace fovsr;

namespace {

// Direct windowed SSIM: for every fully-covered 11x11 window, accumulate the
// Gaussian-weighted moments with plain loops and apply the formula.
double ssim_oracle(const Image<double>& a, const Image<double>& b) {
    const Plane<double> la = luminance(a), lb = luminance(b);
    const int h = static_cast<int>(la.rows()), w = static_cast<int>(la.cols());
    double kern[11][11];
    double ksum = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double dy = i - 5, dx = j - 5;
            kern[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * 1.5 * 1.5));
            ksum += kern[i][j];
        }
    for (auto& row : kern)
        for (auto& v : row) v /= ksum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    int count = 0;
    for (int y = 5; y < h - 5; ++y)
        for (int x = 5; x < w - 5; ++x) {
            double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    ma += kern[i][j] * la(y + i - 5, x + j - 5);
                    mb += kern[i][j] * lb(y + i - 5, x + j - 5);
                }
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double da = la(y + i - 5, x + j - 5) - ma;
                    const double db = lb(y + i - 5, x + j - 5) - mb;
                    va += kern[i][j] * da * da;
                    vb += kern[i][j] * db * db;
                    cov += kern[i][j] * da * db;
                }
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / count;
}

} // namespace

TEST_CASE("psnr basics") {
    auto img = fovsr::testing::random_image<double>(24, 24, 3);

    SUBCASE("identical images hit the 100 dB cap") { CHECK(psnr(img, img) == 100.0); }

    SUBCASE("all-zeros vs all-ones scores 0 dB") {
        auto zeros = Image<double>::constant(16, 16, 0, 0, 0);
        auto ones = Image<double>::constant(16, 16, 1, 1, 1);
        CHECK(psnr(zeros, ones) == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("random pair matches the log-MSE oracle") {
        auto other = fovsr::testing::random_image<double>(24, 24, 4);
        double mse = 0;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 24; ++y)
                for (int x = 0; x < 24; ++x) {
                    const double d = img.chan[c](y, x) - other.chan[c](y, x);
                    mse += d * d;
                }
        mse /= 3 * 24 * 24;
        CHECK(psnr(img, other) == doctest::Approx(10 * std::log10(1 / mse)).epsilon(1e-9));
    }

    SUBCASE("symmetric, and dim mismatch throws") {
        auto other = fovsr::testing::random_image<double>(24, 24, 5);
        CHECK(psnr(img, other) == doctest::Approx(psnr(other, img)));
        auto small = Image<double>::constant(8, 8, 0, 0, 0);
        CHECK_THROWS_AS(psnr(img, small), std::invalid_argument);
    }
}

TEST_CASE("ssim basics") {
    auto img = fovsr::testing::synthetic_scene<double>(40, 48, 6);

    SUBCASE("self-similarity is exactly 1") { CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-9)); }

    SUBCASE("equal constants are perfectly similar") {
        auto a = Image<double>::constant(16, 16, 0.3, 0.3, 0.3);
        CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("0.5-centered negative scores below 1 and matches the windowed oracle") {
        Image<double> neg = img;
        for (auto& c : neg.chan) c = 1.0 - c;
        const double got = ssim(img, neg);
        CHECK(got < 1.0);
        CHECK(got == doctest::Approx(ssim_oracle(img, neg)).epsilon(1e-9));
    }

    SUBCASE("random pair matches the windowed oracle") {
        auto other = fovsr::testing::random_image<double>(40, 48, 7);
        CHECK(ssim(img, other) == doctest::Approx(ssim_oracle(img, other)).epsilon(1e-9));
    }

    SUBCASE("too-small or mismatched inputs throw") {
        auto tiny = Image<double>::constant(10, 16, 0, 0, 0);
        CHECK_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
        auto other = Image<double>::constant(40, 40, 0, 0, 0);
        CHECK_THROWS_AS(ssim(img, other), std::invalid_argument);
    }
}

TEST_CASE("perceptual distance") {
    const auto bb = Backbone<float>::fixed_random();
    auto img = fovsr::testing::synthetic_scene<float>(48, 48, 8);

    SUBCASE("identity and symmetry") {
        CHECK(perceptual_distance(img, img, bb) == doctest::Approx(0.0));
        auto other = fovsr::testing::synthetic_scene<float>(48, 48, 9);
        CHECK(perceptual_distance(img, other, bb) ==
              doctest::Approx(perceptual_distance(other, img, bb)).epsilon(1e-9));
        CHECK(perceptual_distance(img, other, bb) > 0.0);
    }

    SUBCASE("monotone along the degradation ladder, 10 seeded images") {
        int harder_won = 0;
        for (std::uint32_t s = 0; s < 10; ++s) {
            auto gt = fovsr::testing::synthetic_scene<float>(128, 128, 100 + s);
            DegradationSpec light;
            light.blur_sigma = 0.4;
            light.noise_sigma = 0.2 / 255.0;
            light.down_size = 112;
            DegradationSpec heavy;
            heavy.blur_sigma = 2.5;
            heavy.noise_sigma = 20.0 / 255.0;
            heavy.down_size = 40;
            const double d_light = perceptual_distance(simulate_wide(gt, light, s), gt, bb);
            const double d_heavy = perceptual_distance(simulate_wide(gt, heavy, s), gt, bb);
            if (d_heavy > d_light) ++harder_won;
        }
        CHECK(harder_won == 10);
    }

    SUBCASE("backend tag is explicit") { CHECK(perceptual_backend_tag() == "lpips-proxy"); }
}

TEST_CASE("metric report serialization") {
    MetricReport report;
    report.rows.push_back({"img_a", 30.0, 0.9, 0.1});
    report.rows.push_back({"img_b", 34.0, 0.7, 0.3});

    const auto agg = report.aggregate();
    CHECK(agg.psnr_db == doctest::Approx(32.0));
    CHECK(agg.ssim == doctest::Approx(0.8));
    CHECK(agg.perceptual == doctest::Approx(0.2));

    const auto j = report.to_json();
    CHECK(j.at("backend") == "lpips-proxy");
    CHECK(j.at("images").size() == 2);
    CHECK(j.at("images")[0].at("id") == "img_a");
    CHECK(j.at("mean").at("psnr_db").get<double>() == doctest::Approx(32.0));

    const std::string csv = report.to_csv();
    CHECK(csv.find("id,psnr_db,ssim,perceptual_distance,backend") == 0);
    CHECK(csv.find("img_b,34,0.7,0.3,lpips-proxy") != std::string::npos);

    const std::string text = report.to_text();
    CHECK(text.find("img_a") != std::string::npos);
    CHECK(text.find("mean") != std::string::npos);
    CHECK(text.find("lpips-proxy") != std::string::npos);
}
