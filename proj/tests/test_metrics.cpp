#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mvface/metrics.hpp"
#include "test_util.hpp"

using namespace mvface;

namespace {

// Metrics take views, so out-of-range intensities can be tested directly.
struct Raw {
    std::size_t w, h;
    std::vector<double> px;
    ImageView view() const { return {w, h, px}; }
};

Raw constant(std::size_t w, std::size_t h, double v) { return {w, h, std::vector<double>(w * h, v)}; }

double loop_sum(const ImageView& a, const ImageView& b, auto&& f) {
    double s = 0;
    for (std::size_t y = 0; y < a.height; ++y)
        for (std::size_t x = 0; x < a.width; ++x) s += f(a.data[y * a.width + x], b.data[y * b.width + x]);
    return s;
}

}  // namespace

TEST(Metrics, ConstantUnitDifference) {
    const auto I = constant(4, 4, 2.0), G = constant(4, 4, 1.0);
    EXPECT_DOUBLE_EQ(mse(I.view(), G.view()), 1.0);
    EXPECT_DOUBLE_EQ(rmse(I.view(), G.view()), 1.0);
    EXPECT_DOUBLE_EQ(mae(I.view(), G.view()), 1.0);
    EXPECT_NEAR(snr_db(I.view(), G.view()), 6.0206, 1e-4);
    EXPECT_NEAR(psnr_db(I.view(), G.view(), 2.0), -6.0206, 1e-4);
    EXPECT_NEAR(psnr_db(I.view(), G.view(), 2.0, true), 6.0206, 1e-4);
    EXPECT_DOUBLE_EQ(pfe(I.view(), G.view()), 50.0);
}

TEST(Metrics, IdenticalImages) {
    const auto img = test::random_image(9, 7, 1);
    EXPECT_EQ(mse(img, img), 0.0);
    EXPECT_EQ(rmse(img, img), 0.0);
    EXPECT_EQ(mae(img, img), 0.0);
    EXPECT_EQ(pfe(img, img), 0.0);
    EXPECT_EQ(snr_db(img, img), std::numeric_limits<double>::infinity());
    EXPECT_EQ(psnr_db(img, img), std::numeric_limits<double>::infinity());
    EXPECT_EQ(psnr_db(img, img, 1.0, true), std::numeric_limits<double>::infinity());
}

TEST(Metrics, ZeroGallery) {
    const auto I = test::random_image(8, 8, 2, 0.1, 1.0);
    const GrayImage G(8, 8, 0.0);
    EXPECT_NEAR(pfe(I, G), 100.0, 1e-12);
    EXPECT_NEAR(snr_db(I, G), 0.0, 1e-12);
}

TEST(Metrics, SymmetricAbsoluteDifference) {
    Raw I = constant(4, 2, 0.5), G = constant(4, 2, 0.5);
    for (std::size_t i = 0; i < 8; ++i) G.px[i] += i % 2 ? 0.2 : -0.2;
    EXPECT_NEAR(mae(I.view(), G.view()), 0.2, 1e-15);
}

TEST(Metrics, MatchLoopOracles) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto I = test::random_image(13, 9, seed, 0.05, 1.0), G = test::random_image(13, 9, seed + 100);
        const double n = 13 * 9;
        const double ssd = loop_sum(I, G, [](double a, double b) { return (a - b) * (a - b); });
        const double ss = loop_sum(I, G, [](double a, double) { return a * a; });
        EXPECT_NEAR(mse(I, G), ssd / n, 1e-12);
        EXPECT_NEAR(mae(I, G), loop_sum(I, G, [](double a, double b) { return std::abs(a - b); }) / n, 1e-12);
        EXPECT_NEAR(pfe(I, G), std::sqrt(ssd) / std::sqrt(ss) * 100.0, 1e-9);
        EXPECT_NEAR(snr_db(I, G), 10.0 * std::log10(ss / ssd), 1e-9);
        EXPECT_NEAR(psnr_db(I, G, 1.0), 10.0 * std::log10(1.0 / ssd), 1e-9);
    }
}

TEST(Metrics, Identities) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const std::size_t w = 5 + seed % 11, h = 3 + seed % 7;
        const auto I = test::random_image(w, h, seed, 0.05, 1.0), G = test::random_image(w, h, seed + 500);
        EXPECT_NEAR(rmse(I, G) * rmse(I, G), mse(I, G), 1e-12);
        EXPECT_LE(mae(I, G), rmse(I, G) + 1e-15);
        EXPECT_NEAR(psnr_db(I, G) - psnr_db(I, G, 1.0, true), -10.0 * std::log10(static_cast<double>(w * h)), 1e-9);
        const auto r = compute_metrics(I, G);
        EXPECT_EQ(r.mse, mse(I, G));
        EXPECT_EQ(r.rmse, rmse(I, G));
        EXPECT_EQ(r.psnr_conventional_db, psnr_db(I, G, 1.0, true));
    }
}

TEST(Metrics, Errors) {
    const GrayImage a(4, 4, 0.5), b(4, 5, 0.5), zero(4, 4, 0.0);
    for (auto f : {mse, rmse, mae, pfe, snr_db}) EXPECT_THROW(f(a, b), Error);
    EXPECT_THROW(psnr_db(a, b), Error);
    EXPECT_THROW(pfe(zero, a), Error);
    EXPECT_THROW(mse(GrayImage(), GrayImage()), Error);
}
