#include <cmath>
#include <vector>

#include "gtest/gtest.h"

#include "swan/datagen.hpp"
#include "swan/wavelet.hpp"

using swan::FieldKind;
using swan::Matrix;
using swan::Vec;

namespace {

void expect_simplex(const Matrix& a) {
    for (std::size_t p = 0; p < a.cols(); ++p) {
        double s = 0;
        for (std::size_t j = 0; j < a.rows(); ++j) {
            ASSERT_GE(a(j, p), 0.0);
            s += a(j, p);
        }
        ASSERT_NEAR(s, 1.0, 1e-9) << "pixel " << p;
    }
}

// Mean lag-h correlation of a map along rows and columns.
double correlogram(const Matrix& a, std::size_t j, std::size_t rows, std::size_t cols, std::size_t h) {
    double mean = 0;
    for (std::size_t p = 0; p < rows * cols; ++p) mean += a(j, p);
    mean /= static_cast<double>(rows * cols);
    double var = 0, cov = 0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < rows * cols; ++p) var += (a(j, p) - mean) * (a(j, p) - mean);
    var /= static_cast<double>(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            if (c + h < cols) cov += (a(j, r * cols + c) - mean) * (a(j, r * cols + c + h) - mean), ++n;
            if (r + h < rows) cov += (a(j, r * cols + c) - mean) * (a(j, (r + h) * cols + c) - mean), ++n;
        }
    return cov / static_cast<double>(n) / var;
}

double power(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return s / static_cast<double>(v.size());
}

} // namespace

TEST(Signatures, RangeDeterminismDistinctness) {
    const auto a = swan::make_signatures(3, 224, 0);
    ASSERT_EQ(a.values.rows(), 224u);
    ASSERT_EQ(a.values.cols(), 3u);
    for (double v : a.values.flat()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(a.values, swan::make_signatures(3, 224, 0).values);
    EXPECT_NE(a.values, swan::make_signatures(3, 224, 1).values);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = swan::make_signatures(5, 431, seed);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = i + 1; j < 5; ++j) EXPECT_GE(swan::sad(s.values.col(i), s.values.col(j)), 0.15);
    }
}

TEST(Signatures, Preconditions) {
    EXPECT_THROW(swan::make_signatures(1, 224, 0), swan::Error);
    EXPECT_THROW(swan::make_signatures(3, 15, 0), swan::Error);
    try {
        // 300 smooth spectra on 16 bands cannot all be pairwise 0.15 rad apart
        swan::make_signatures(300, 16, 0);
        FAIL();
    } catch (const swan::Error& e) {
        EXPECT_EQ(e.code(), swan::ErrorCode::RejectionExhausted);
    }
}

TEST(Fields, BlocksOnSimplexWithPurePixels) {
    const auto a = swan::make_abundance_field(FieldKind::Blocks, 75, 75, 3, 0);
    expect_simplex(a.values);
    for (std::size_t j = 0; j < 3; ++j) {
        double best = 0;
        for (std::size_t p = 0; p < a.pixels(); ++p) best = std::max(best, a.values(j, p));
        EXPECT_GE(best, 0.9) << "endmember " << j;
    }
    EXPECT_EQ(a.values, swan::make_abundance_field(FieldKind::Blocks, 75, 75, 3, 0).values);
}

TEST(Fields, SphericGaussianCorrelogram) {
    const auto a = swan::make_abundance_field(FieldKind::SphericGaussian, 128, 128, 5, 0);
    expect_simplex(a.values);
    for (std::size_t j = 0; j < 5; ++j)
        EXPECT_GT(correlogram(a.values, j, 128, 128, 1), correlogram(a.values, j, 128, 128, 10)) << "map " << j;
}

TEST(Fields, KindParsingAndPreconditions) {
    EXPECT_EQ(swan::parse_field_kind("blocks"), FieldKind::Blocks);
    EXPECT_EQ(swan::parse_field_kind("spheric_gaussian"), FieldKind::SphericGaussian);
    try {
        swan::parse_field_kind("stripes");
        FAIL();
    } catch (const swan::Error& e) {
        EXPECT_EQ(e.code(), swan::ErrorCode::InvalidKind);
    }
    EXPECT_THROW(swan::make_abundance_field(FieldKind::Blocks, 1, 2, 3, 0), swan::Error);
    expect_simplex(swan::make_abundance_field(FieldKind::Blocks, 2, 2, 4, 1).values);
}

TEST(Mix, OneHotAndUniform) {
    const auto m = swan::make_signatures(3, 32, 4);
    swan::AbundanceMatrix a{Matrix(3, 2)};
    a.values(1, 0) = 1.0;
    for (std::size_t j = 0; j < 3; ++j) a.values(j, 1) = 1.0 / 3.0;
    const auto cube = swan::mix(m, a, 1, 2);
    const Vec col1 = m.values.col(1);
    for (std::size_t l = 0; l < 32; ++l) EXPECT_EQ(cube.data(0, l), col1[l]);

    swan::EndmemberMatrix same{Matrix(32, 3), {}};
    for (std::size_t j = 0; j < 3; ++j) same.values.set_col(j, col1);
    const auto flat = swan::mix(same, a, 1, 2);
    for (std::size_t l = 0; l < 32; ++l) EXPECT_NEAR(flat.data(1, l), col1[l], 1e-15);
}

TEST(Mix, TripleLoopOracle) {
    swan::RngStream rng(3);
    swan::EndmemberMatrix m{Matrix(7, 3), {}};
    swan::AbundanceMatrix a{Matrix(3, 6)};
    for (double& v : m.values.flat()) v = rng.uniform(0, 1);
    for (double& v : a.values.flat()) v = rng.uniform(0, 1);
    const auto cube = swan::mix(m, a, 2, 3);
    for (std::size_t p = 0; p < 6; ++p)
        for (std::size_t l = 0; l < 7; ++l) {
            double s = 0;
            for (std::size_t j = 0; j < 3; ++j) s += m.values(l, j) * a.values(j, p);
            EXPECT_EQ(cube.data(p, l), s);
        }
    try {
        swan::mix(m, a, 2, 2);
        FAIL();
    } catch (const swan::Error& e) {
        EXPECT_EQ(e.code(), swan::ErrorCode::DimensionMismatch);
    }
}

TEST(Noise, RealizedSnr) {
    const auto scene = swan::synthesize(swan::scenario_by_name("data1"), std::nullopt, 0);
    EXPECT_EQ(scene.cube, swan::add_noise_snr(scene.cube, std::nullopt, 1));
    for (double snr : {0.0, 20.0}) {
        const auto noisy = swan::add_noise_snr(scene.cube, snr, 3);
        Vec diff(noisy.data.size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = noisy.data.flat()[i] - scene.cube.data.flat()[i];
        const double realized = 10 * std::log10(power(scene.cube.data.flat()) / power(diff));
        EXPECT_NEAR(realized, snr, 0.2);
    }
    EXPECT_EQ(swan::add_noise_snr(scene.cube, 20.0, 3), swan::add_noise_snr(scene.cube, 20.0, 3));
}

TEST(Scenes, ExactLinearMixtureAndRanges) {
    const auto scene = swan::synthesize(swan::scenario_by_name("data1"), std::nullopt, 2);
    EXPECT_EQ(scene.cube.rows, 75u);
    EXPECT_EQ(scene.cube.bands, 224u);
    EXPECT_EQ(scene.cube, swan::mix(scene.truth.endmembers, scene.truth.abundances, 75, 75));
    for (double v : scene.cube.data.flat()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.5);
    }
    const auto s2 = swan::scenario_by_name("data2");
    EXPECT_EQ(s2.rows, 128u);
    EXPECT_EQ(s2.bands, 431u);
    EXPECT_EQ(s2.endmembers, 5u);
    EXPECT_THROW(swan::scenario_by_name("data3"), swan::Error);
}

TEST(Scenes, CoefficientDecayIsDecreasing) {
    const auto scene = swan::synthesize(swan::scenario_by_name("data1"), std::nullopt, 0);
    const auto curve = swan::coefficient_decay_report(swan::dwt_cube(scene.cube)).combined;
    std::size_t nonzero = 0;
    while (nonzero < curve.size() && curve[nonzero] > 0.0) ++nonzero;
    ASSERT_GT(nonzero, 10u);
    for (std::size_t i = 1; i < nonzero; ++i) EXPECT_LT(curve[i], curve[i - 1]) << "rank " << i;
}
