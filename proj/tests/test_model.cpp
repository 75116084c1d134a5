#include <cmath>
#include <numbers>
#include <vector>

#include "gtest/gtest.h"

#include "gradcheck.hpp"
#include "swan/datagen.hpp"
#include "swan/model.hpp"

using swan::LayerWidths;
using swan::SwanModel;
using swan::TrainConfig;
using swan::Vec;
using swan::WaveletPair;

namespace {

std::size_t count_by_formula(std::size_t K, std::size_t e, const LayerWidths& w) {
    const auto& h = w.encoder;
    const auto& g = w.forward;
    return (2 * K * h[0] + h[0]) + (h[0] * h[1] + h[1]) + (h[1] * h[2] + h[2]) + (h[2] * e + e) + 2 * K * e +
           (K * g[0] + g[0]) + (g[0] * g[1] + g[1]) + (g[1] * g[2] + g[2]) + (g[2] * K + K);
}

swan::ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const swan::Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return swan::ErrorCode::IoError;
}

class QuietLog : public ::testing::Test {
protected:
    void SetUp() override { swan::log_sink() = {}; }
};

} // namespace

TEST_F(QuietLog, ParameterCountFormula) {
    for (auto [K, e] : std::vector<std::pair<std::size_t, std::size_t>>{{115, 3}, {81, 3}, {219, 5}, {12, 3}}) {
        const auto m = swan::build(K, e);
        EXPECT_EQ(m.parameter_count(), count_by_formula(K, e, LayerWidths{}));
    }
    const LayerWidths w{{8, 6, 4}, {6, 6, 6}};
    EXPECT_EQ(swan::build(12, 3, w).parameter_count(), count_by_formula(12, 3, w));
}

TEST_F(QuietLog, ParameterCountNearTableValues) {
    const double swan_224 = static_cast<double>(swan::build(115, 3).parameter_count());
    EXPECT_NEAR(swan_224, 55971.0, 0.25 * 55971.0);
    const double samson = static_cast<double>(swan::build(81, 3).parameter_count());
    EXPECT_NEAR(samson, 36591.0, 0.25 * 36591.0);
}

TEST_F(QuietLog, TopologyAndErrors) {
    const auto m = swan::build(115, 3);
    EXPECT_EQ(m[swan::L1].in_dim(), 230u);
    EXPECT_EQ(m[swan::L4].out_dim(), 3u);
    EXPECT_EQ(m[swan::L5A].out_dim(), 115u);
    EXPECT_EQ(m[swan::L5D].out_dim(), 115u);
    EXPECT_FALSE(m[swan::L5A].has_bias);
    EXPECT_EQ(m[swan::L6].in_dim(), 115u);
    EXPECT_EQ(m[swan::L9].out_dim(), 115u);
    EXPECT_EQ(code_of([] { swan::build(3, 4); }), swan::ErrorCode::InvalidDims);
    EXPECT_EQ(code_of([] { swan::build(10, 1); }), swan::ErrorCode::InvalidDims);
    EXPECT_EQ(swan::build(5, 2, std::nullopt, 9), swan::build(5, 2, std::nullopt, 9));
}

TEST(Model, WidthsText) {
    const LayerWidths w{{1, 2, 3}, {4, 5, 6}};
    EXPECT_EQ(swan::format_widths(w), "1,2,3/4,5,6");
    EXPECT_EQ(swan::parse_widths("1,2,3/4,5,6"), w);
    EXPECT_EQ(code_of([] { swan::parse_widths("1,2/3,4,5"); }), swan::ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([] { swan::parse_widths("1,2,3"); }), swan::ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([] { swan::parse_widths("1,x,3/1,2,3"); }), swan::ErrorCode::InvalidConfig);
}

TEST_F(QuietLog, ForwardContracts) {
    const auto m = swan::build(12, 3, LayerWidths{{8, 6, 4}, {6, 6, 6}}, 3);
    const auto batch = swan::testing::tiny_batch(20, 12, 1);
    for (const auto& p : batch) {
        swan::RngStream r1(1), r2(1);
        const auto a = swan::forward_pass(m, p, false, r1);
        const auto b = swan::forward_pass(m, p, false, r2);
        double s = 0;
        for (double v : a.abundances) {
            EXPECT_GE(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
        for (const Vec* v : {&a.approx_hat, &a.detail_hat, &a.approx_tilde})
            for (double x : *v) EXPECT_GE(x, 0.0);
        EXPECT_EQ(a.abundances, b.abundances);
        EXPECT_EQ(a.approx_tilde, b.approx_tilde);
    }
    swan::RngStream r(0);
    EXPECT_EQ(code_of([&] { swan::forward_pass(m, WaveletPair{Vec(11), Vec(11), 15}, false, r); }),
              swan::ErrorCode::DimensionMismatch);
}

TEST(Loss, L5aExamples) {
    const std::vector<Vec> x = {{1, 0}}, u = {{0, 1}};
    EXPECT_NEAR(swan::loss_l5a(x, u), 2.0 + std::numbers::pi / 2, 1e-15);
    EXPECT_EQ(swan::loss_l5a(x, x), 0.0);
    // noise is added to the estimate before comparison
    const std::vector<Vec> n = {{1, -1}};
    EXPECT_EQ(swan::loss_l5a(x, u, n), 0.0);
}

TEST(Loss, L5dExamples) {
    const std::vector<Vec> x = {{1, -2, 3}}, scaled = {{2.5, -5, 7.5}}, anti = {{-1, 2, -3}};
    EXPECT_NEAR(swan::loss_l5d(x, scaled), 0.0, 1e-7);
    EXPECT_NEAR(swan::loss_l5d(x, anti), std::numbers::pi, 1e-7);
    std::size_t guarded = 0;
    const std::vector<Vec> zero = {{0, 0, 0}};
    EXPECT_EQ(swan::loss_l5d(x, zero, &guarded), 0.0);
    EXPECT_EQ(guarded, 1u);
}

TEST(Loss, L9ZeroNormIsAnError) {
    const std::vector<Vec> x = {{3, 4}}, z = {{0, 0}};
    EXPECT_EQ(code_of([&] { swan::loss_l9(x, z); }), swan::ErrorCode::ZeroNormVector);
    EXPECT_EQ(swan::loss_l9(x, x), 0.0);
}

TEST(Loss, RandomBatchAgainstScalarOracle) {
    swan::RngStream rng(42);
    std::vector<Vec> x(2, Vec(6)), u(2, Vec(6)), n(2, Vec(6));
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 6; ++k) {
            x[i][k] = rng.uniform(0, 1);
            u[i][k] = rng.uniform(0, 1);
            n[i][k] = rng.normal(0, 0.1);
        }
    double expect_a = 0, expect_d = 0;
    for (int i = 0; i < 2; ++i) {
        double sq = 0, xu = 0, xx = 0, uu = 0, xr = 0, rr = 0;
        for (int k = 0; k < 6; ++k) {
            const double r = u[i][k] + n[i][k];
            sq += (x[i][k] - r) * (x[i][k] - r);
            xr += x[i][k] * r;
            rr += r * r;
            xx += x[i][k] * x[i][k];
            xu += x[i][k] * u[i][k];
            uu += u[i][k] * u[i][k];
        }
        expect_a += 0.5 * (sq + std::acos(xr / std::sqrt(xx * rr)));
        expect_d += 0.5 * std::acos(xu / std::sqrt(xx * uu));
    }
    EXPECT_NEAR(swan::loss_l5a(x, u, n), expect_a, 1e-13);
    EXPECT_NEAR(swan::loss_l5d(x, u), expect_d, 1e-13);
}

TEST_F(QuietLog, TotalLossMatchesTermByTermRecomputation) {
    SwanModel m = swan::testing::tiny_model(4);
    const auto batch = swan::testing::tiny_batch(5, 12, 2);
    TrainConfig cfg;
    cfg.noise_sigma = 0.0;
    const auto got = swan::total_loss(m, std::span<const WaveletPair>(batch), cfg, swan::RngStream(1), false);

    std::vector<Vec> xa, xd, ha, hd, ta;
    for (const auto& p : batch) {
        swan::RngStream r(0);
        const auto f = swan::forward_pass(m, p, false, r);
        xa.push_back(p.approx);
        xd.push_back(p.detail);
        ha.push_back(f.approx_hat);
        hd.push_back(f.detail_hat);
        ta.push_back(f.approx_tilde);
    }
    double fro = 0, l1 = 0;
    for (double w : m[swan::L5A].weights.flat()) fro += w * w;
    for (double w : m[swan::L5D].weights.flat()) l1 += std::abs(w);
    const double expect = swan::loss_l5a(xa, ha) + swan::loss_l5d(xd, hd) + swan::loss_l9(xa, ta) +
                          0.1 * std::sqrt(fro) + 0.01 * l1;
    EXPECT_NEAR(got.total, expect, 1e-12);
    EXPECT_NEAR(got.l2_reg, std::sqrt(fro), 1e-13);
    EXPECT_NEAR(got.l1_reg, l1, 1e-13);
}

TEST_F(QuietLog, ZeroDecoderZeroRegularizers) {
    SwanModel m = swan::testing::tiny_model(4);
    m[swan::L5A].weights.fill(0.0);
    m[swan::L5D].weights.fill(0.0);
    const auto batch = swan::testing::tiny_batch(3, 12, 2);
    TrainConfig cfg; // sigma > 0 keeps the l5a angle defined
    const auto loss = swan::total_loss(m, std::span<const WaveletPair>(batch), cfg, swan::RngStream(1), false);
    EXPECT_EQ(loss.l1_reg, 0.0);
    EXPECT_EQ(loss.l2_reg, 0.0);
    EXPECT_EQ(loss.guarded_detail, 3u);
    EXPECT_EQ(loss.l5d_term, 0.0);
}

TEST_F(QuietLog, RegularizerLinearInLambda2) {
    SwanModel m = swan::testing::tiny_model(8);
    const auto batch = swan::testing::tiny_batch(4, 12, 3);
    TrainConfig cfg;
    double prev = -1;
    for (double l2 : {0.0, 0.01, 0.1, 1.0}) {
        cfg.lambda2 = l2;
        const auto loss = swan::total_loss(m, std::span<const WaveletPair>(batch), cfg, swan::RngStream(1), true);
        const double contribution = l2 * loss.l1_reg;
        EXPECT_GE(contribution, prev);
        EXPECT_NEAR(loss.total,
                    loss.l5a_term + loss.l5d_term + loss.l9_term + cfg.lambda1 * loss.l2_reg + l2 * loss.l1_reg, 1e-12);
        prev = contribution;
    }
}

TEST_F(QuietLog, GradientMatchesFiniteDifferences) {
    const auto res = swan::testing::check_gradients(swan::testing::tiny_model(1),
                                                    swan::testing::tiny_batch(4, 12, 9), TrainConfig{});
    EXPECT_EQ(res.failures, 0u) << "worst " << res.worst_relative << " at " << res.worst_location;
    EXPECT_EQ(res.parameters, swan::testing::tiny_model(1).parameter_count());
}

TEST_F(QuietLog, DetailGuardKeepsGradientsFinite) {
    SwanModel m = swan::testing::tiny_model(2);
    auto batch = swan::testing::tiny_batch(3, 12, 4);
    std::fill(batch[1].detail.begin(), batch[1].detail.end(), 0.0);
    swan::ModelGradients g(m);
    const auto loss = swan::total_loss(m, std::span<const WaveletPair>(batch), TrainConfig{}, swan::RngStream(3), true, &g);
    EXPECT_EQ(loss.guarded_detail, 1u);
    EXPECT_TRUE(std::isfinite(loss.total));
    for (auto block : g.blocks(m))
        for (double v : block) ASSERT_TRUE(std::isfinite(v));
}

TEST_F(QuietLog, ThreadCountDoesNotChangeResults) {
    SwanModel m = swan::build(30, 3, LayerWidths{{16, 8, 8}, {8, 8, 8}}, 5);
    const auto batch = swan::testing::tiny_batch(37, 30, 6);
    TrainConfig one, many;
    many.threads = 4;
    swan::ModelGradients g1(m), g4(m);
    const auto a = swan::total_loss(m, std::span<const WaveletPair>(batch), one, swan::RngStream(7), true, &g1);
    const auto b = swan::total_loss(m, std::span<const WaveletPair>(batch), many, swan::RngStream(7), true, &g4);
    EXPECT_EQ(a.total, b.total);
    EXPECT_EQ(g1.weights, g4.weights);
    EXPECT_EQ(g1.bias, g4.bias);
}

TEST(Normalize, Examples) {
    swan::WaveletCube c{1, 2, {WaveletPair{{1.0, -2.0}, {0.5, 0.0}, 0}, WaveletPair{{0.25, 1.0}, {-0.5, 0.0}, 0}}};
    const auto n = swan::normalize_pixelwise(c);
    EXPECT_EQ(n.scales[0], 2.0);
    EXPECT_EQ(n.cube.pairs[0].approx, (Vec{0.5, -1.0}));
    EXPECT_EQ(n.cube.pairs[0].detail, (Vec{0.25, 0.0}));
    EXPECT_EQ(n.scales[1], 1.0);
    EXPECT_EQ(n.cube.pairs[1].approx, c.pairs[1].approx);
    c.pairs[1] = WaveletPair{{0.0, 0.0}, {0.0, 0.0}, 0};
    EXPECT_EQ(code_of([&] { swan::normalize_pixelwise(c); }), swan::ErrorCode::AllZeroPixel);
}

TEST(Normalize, RandomCubeHasUnitPeak) {
    swan::RngStream rng(3);
    swan::WaveletCube c{10, 10, {}};
    for (int p = 0; p < 100; ++p) {
        WaveletPair w{Vec(9), Vec(9), 10};
        for (double& v : w.approx) v = rng.normal(0, 5);
        for (double& v : w.detail) v = rng.normal(0, 1);
        c.pairs.push_back(w);
    }
    for (const auto& pair : swan::normalize_pixelwise(c).cube.pairs) {
        double peak = 0;
        for (double v : pair.approx) peak = std::max(peak, std::abs(v));
        for (double v : pair.detail) peak = std::max(peak, std::abs(v));
        EXPECT_NEAR(peak, 1.0, 1e-12);
    }
}

TEST(Train, SplitSizes) {
    const auto [tr, ho] = swan::split_pixels(5625, 0.8, 0);
    EXPECT_EQ(tr.size(), 4500u);
    EXPECT_EQ(ho.size(), 1125u);
    std::vector<bool> seen(5625, false);
    for (auto i : tr) seen[i] = true;
    for (auto i : ho) {
        EXPECT_FALSE(seen[i]);
        seen[i] = true;
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
    EXPECT_EQ(swan::split_pixels(100, 0.8, 3), swan::split_pixels(100, 0.8, 3));
}

namespace {

swan::WaveletCube small_scene(std::uint64_t seed) {
    const swan::Scenario s{"small", 12, 12, 48, 3, swan::FieldKind::Blocks};
    return swan::normalize_pixelwise(swan::dwt_cube(swan::synthesize(s, 40.0, seed).cube)).cube;
}

} // namespace

TEST_F(QuietLog, ZeroEpochsLeavesParametersUntouched) {
    const auto cube = small_scene(1);
    SwanModel m = swan::build(cube.coefficients(), 3, std::nullopt, 1);
    const SwanModel before = m;
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto res = swan::train(m, cube, cfg);
    EXPECT_TRUE(res.trace.empty());
    EXPECT_EQ(m, before);
}

TEST_F(QuietLog, TrainingIsDeterministic) {
    const auto cube = small_scene(2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    SwanModel a = swan::build(cube.coefficients(), 3, std::nullopt, 2), b = a;
    const auto ra = swan::train(a, cube, cfg);
    cfg.threads = 3;
    const auto rb = swan::train(b, cube, cfg);
    ASSERT_EQ(ra.trace.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(ra.trace[i].train.total, rb.trace[i].train.total);
        EXPECT_EQ(ra.trace[i].heldout.total, rb.trace[i].heldout.total);
    }
    EXPECT_EQ(a, b);
}

TEST_F(QuietLog, TrainingReducesLossOnData1) {
    const auto scene = swan::synthesize(swan::scenario_by_name("data1"), 40.0, 0);
    const auto cube = swan::normalize_pixelwise(swan::dwt_cube(scene.cube)).cube;
    TrainConfig cfg;
    cfg.epochs = 10;
    SwanModel m = swan::build(cube.coefficients(), 3, std::nullopt, 0);
    const auto [tr, ho] = swan::split_pixels(cube.pixel_count(), cfg.train_fraction, cfg.seed);
    swan::seed_decoder_from_pixels(m, cube, tr, cfg.seed);
    const auto res = swan::train(m, cube, cfg);
    ASSERT_EQ(res.trace.size(), 10u);
    EXPECT_LT(res.trace.back().train.total, res.trace.front().train.total);
    EXPECT_TRUE(res.trace.back().has_heldout);
    for (const auto& rec : res.trace) {
        EXPECT_GE(rec.train.l5a_term, 0.0);
        EXPECT_GE(rec.train.l9_term, 0.0);
    }
}

TEST_F(QuietLog, ZeroApproximationSurfacesAsNonFiniteLoss) {
    swan::WaveletCube c{2, 2, {}};
    for (int p = 0; p < 4; ++p) c.pairs.push_back(WaveletPair{Vec(12, 0.0), Vec(12, 0.5), 17});
    SwanModel m = swan::testing::tiny_model(1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.train_fraction = 0.5;
    try {
        swan::train(m, c, cfg);
        FAIL();
    } catch (const swan::Error& e) {
        EXPECT_EQ(e.code(), swan::ErrorCode::NonFiniteLoss);
        EXPECT_NE(std::string(e.what()).find("epoch 1 batch 0"), std::string::npos) << e.what();
    }
}
