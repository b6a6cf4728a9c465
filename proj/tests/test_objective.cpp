#include <gtest/gtest.h>

#include "oracles.hpp"
#include "selfdeblur/objective.hpp"
#include "selfdeblur/synth.hpp"

namespace selfdeblur {
namespace {

TEST(Loss, ExactFitIsZero) {
    const Image sharp = make_test_scene(32, 32, 3, 1);
    const Pyramid xs = build_pyramid(sharp, 3);
    std::vector<Kernel> hs{motion_kernel(5, 20), motion_kernel(3, 20), Kernel::delta(3, 3)};
    std::vector<Image> ys;
    for (int s = 0; s < 3; ++s) ys.push_back(conv_circular(xs.levels[s], hs[s]));
    const LossEvaluation ev = evaluate_loss(xs.levels, hs, ys, {}, true);
    EXPECT_LE(ev.value.total, 1e-10);
    for (const auto& g : ev.grad)
        for (double v : g.data) EXPECT_LE(std::abs(v), 1e-10);
}

TEST(Loss, ConstantImagesClosedForm) {
    const double c = 0.3, d = 0.8;
    const std::vector<Image> xs{Image(6, 10, 3, c)};
    const std::vector<Image> ys{Image(6, 10, 3, d)};
    const std::vector<Kernel> hs{oracle::random_kernel(3, 5, 2)};
    EXPECT_NEAR(loss(xs, hs, ys, {}), 6 * 10 * 3 * (d - c) * (d - c), 1e-10);
}

TEST(Loss, MatchesLoopOracle) {
    for (double lambda_x : {0.0, 0.5}) {
        const std::vector<Image> xs{oracle::random_image(8, 8, 3, 1), oracle::random_image(4, 4, 3, 2)};
        const std::vector<Image> ys{oracle::random_image(8, 8, 3, 3), oracle::random_image(4, 4, 3, 4)};
        const std::vector<Kernel> hs{oracle::random_kernel(3, 3, 5), oracle::random_kernel(3, 3, 6)};
        LossConfig cfg;
        cfg.lambda_x = lambda_x;
        EXPECT_NEAR(loss(xs, hs, ys, cfg), oracle::loss_loop(xs, hs, ys, lambda_x, cfg.charbonnier_eps), 1e-10);
    }
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    for (TvMode mode : {TvMode::Isotropic, TvMode::Anisotropic}) {
        const std::vector<Image> xs{oracle::random_image(8, 8, 1, 7)};
        const std::vector<Image> ys{oracle::random_image(8, 8, 1, 8)};
        const std::vector<Kernel> hs{oracle::random_kernel(3, 3, 9)};
        LossConfig cfg;
        cfg.lambda_x = 0.7;
        cfg.tv_mode = mode;
        const auto g = loss_gradient_wrt_images(xs, hs, ys, cfg);
        for (std::size_t i = 0; i < xs[0].size(); ++i) {
            auto p = xs;
            const double step = 1e-6;
            p[0].data[i] += step;
            const double up = loss(p, hs, ys, cfg);
            p[0].data[i] -= 2 * step;
            const double down = loss(p, hs, ys, cfg);
            const double numeric = (up - down) / (2 * step);
            const double denom = std::max({std::abs(numeric), std::abs(g[0].data[i]), 1e-8});
            EXPECT_LE(std::abs(numeric - g[0].data[i]) / denom, 1e-5) << i;
        }
    }
}

TEST(Loss, FlatImageHasZeroTvGradient) {
    const std::vector<Image> xs{Image(8, 8, 3, 0.4)};
    const std::vector<Kernel> hs{Kernel::delta(3, 3)};
    LossConfig cfg;
    cfg.lambda_x = 1.0;
    const LossEvaluation ev = evaluate_loss(xs, hs, xs, cfg, true);
    for (double v : ev.grad[0].data) EXPECT_EQ(v, 0.0);
    // Smoothed TV of a flat image is N * eps rather than zero.
    EXPECT_NEAR(ev.value.tv, 8 * 8 * 3 * cfg.charbonnier_eps, 1e-15);
}

TEST(Loss, ScaleWeightsAndBookkeeping) {
    const std::vector<Image> xs{oracle::random_image(8, 8, 1, 1), oracle::random_image(4, 4, 1, 2)};
    const std::vector<Image> ys{oracle::random_image(8, 8, 1, 3), oracle::random_image(4, 4, 1, 4)};
    const std::vector<Kernel> hs{Kernel::delta(3, 3), Kernel::delta(3, 3)};
    LossConfig cfg;
    cfg.scale_weights = {1.0, 0.0};
    const LossValue a = evaluate_loss(xs, hs, ys, cfg, false).value;
    EXPECT_DOUBLE_EQ(a.total, a.fidelity[0]);
    EXPECT_GT(a.fidelity[1], 0.0);
    cfg.scale_weights = {1.0};
    EXPECT_THROW(loss(xs, hs, ys, cfg), std::invalid_argument);
}

TEST(Loss, RejectsMismatches) {
    const std::vector<Image> xs{Image(8, 8)};
    const std::vector<Kernel> hs{Kernel::delta(3, 3)};
    EXPECT_THROW(loss(xs, hs, {Image(8, 7)}, {}), std::invalid_argument);
    EXPECT_THROW(loss(xs, {}, xs, {}), std::invalid_argument);
    LossConfig bad;
    bad.charbonnier_eps = 0.0;
    EXPECT_THROW(loss(xs, hs, xs, bad), std::invalid_argument);
}

}  // namespace
}  // namespace selfdeblur
