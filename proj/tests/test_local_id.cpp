#include "idprobe/local_id.hpp"

#include "idprobe/generators.hpp"

#include "gtest/gtest.h"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>

using namespace idprobe;

TEST(NnRatios, BasicRatio) {
    NeighborTable table;
    table.k = 2;
    table.indices.resize(1, 2);
    table.distances.resize(1, 2);
    table.indices << 1, 2;
    table.distances << 1.0, 2.0;
    const RatioSample sample = nn_ratios(table);
    ASSERT_EQ(sample.ratios.size(), 1u);
    EXPECT_DOUBLE_EQ(sample.ratios[0], 2.0);
}

TEST(NnRatios, DuplicatesDroppedAndCounted) {
    NeighborTable table;
    table.k = 2;
    table.indices.resize(2, 2);
    table.distances.resize(2, 2);
    table.indices << 1, 2, 0, 2;
    table.distances << 0.0, 1.0, 0.5, 1.5;
    const RatioSample sample = nn_ratios(table);
    EXPECT_EQ(sample.dropped_duplicates, 1);
    ASSERT_EQ(sample.ratios.size(), 1u);
    EXPECT_DOUBLE_EQ(sample.ratios[0], 3.0);
}

TEST(NnRatios, AllDuplicatesIsError) {
    NeighborTable table;
    table.k = 2;
    table.indices.resize(2, 2);
    table.distances.resize(2, 2);
    table.indices << 1, 2, 0, 2;
    table.distances << 0.0, 1.0, 0.0, 1.0;
    EXPECT_THROW(nn_ratios(table), NumericalError);
}

TEST(NnRatios, UniformLineMatchesAnalyticCdf) {
    // For a 1-manifold the ratio rho = r2/r1 has CDF F(rho) = 1 - 1/rho.
    const PointCloud cloud = generate_hypercube(10000, 1, 6);
    RatioSample sample = nn_ratios(knn(cloud, 2));
    std::sort(sample.ratios.begin(), sample.ratios.end());
    const int m = int(sample.ratios.size());
    double sup_gap = 0.0;
    for (int i = 0; i < m; ++i) {
        const double empirical = double(i + 1) / double(m + 1);
        const double analytic = 1.0 - 1.0 / sample.ratios[std::size_t(i)];
        sup_gap = std::max(sup_gap, std::abs(empirical - analytic));
    }
    EXPECT_LT(sup_gap, 0.03);
}

TEST(RatioFit, HandComputedSlope) {
    // ratios {2,4}, F = {1/3, 2/3}, no discard:
    // slope = (ln2*(-ln(2/3)) + ln4*(-ln(1/3))) / (ln^2 2 + ln^2 4)
    const RatioFit fit = fit_ratio_slope({2.0, 4.0}, 0.0);
    const double expected =
        (std::log(2.0) * -std::log(2.0 / 3.0) +
         std::log(4.0) * -std::log(1.0 / 3.0)) /
        (std::log(2.0) * std::log(2.0) + std::log(4.0) * std::log(4.0));
    EXPECT_DOUBLE_EQ(fit.slope, expected);
    EXPECT_NEAR(fit.slope, 0.7511, 1e-3);
}

TEST(RatioFit, AllRatiosOneIsDegenerate) {
    EXPECT_THROW(fit_ratio_slope({1.0, 1.0, 1.0}, 0.0), NumericalError);
}

TEST(RatioFit, DiscardFractionValidated) {
    EXPECT_THROW(fit_ratio_slope({2.0, 3.0}, 1.0), UsageError);
    EXPECT_THROW(fit_ratio_slope({2.0, 3.0}, -0.1), UsageError);
}

TEST(LocalId, LineSegment) {
    const IdEstimate est = estimate_local_id(generate_hypercube(2000, 1, 1));
    EXPECT_GT(est.dimension, 0.9);
    EXPECT_LT(est.dimension, 1.1);
    EXPECT_LE(est.ci_low, est.dimension);
    EXPECT_GE(est.ci_high, est.dimension);
    EXPECT_EQ(est.method, IdMethod::local);
}

TEST(LocalId, UnitSquare) {
    const IdEstimate est = estimate_local_id(generate_hypercube(2000, 2, 1));
    EXPECT_GT(est.dimension, 1.8);
    EXPECT_LT(est.dimension, 2.2);
}

TEST(LocalId, TooFewPointsIsError) {
    EXPECT_THROW(estimate_local_id(generate_hypercube(10, 2, 0)),
                 NumericalError);
}

TEST(LocalId, ScaleInvariance) {
    const PointCloud cloud = generate_hypercube(500, 3, 8);
    const IdEstimate base = estimate_local_id(cloud);
    PointCloud doubled = cloud;
    doubled.points *= 4.0;  // power of two: distances scale exactly
    EXPECT_DOUBLE_EQ(estimate_local_id(doubled).dimension, base.dimension);
    PointCloud odd = cloud;
    odd.points *= 3.7;
    EXPECT_NEAR(estimate_local_id(odd).dimension, base.dimension, 1e-9);
}

TEST(LocalId, IsometryInvariance) {
    const PointCloud cloud = generate_hypercube(800, 3, 12);
    const IdEstimate base = estimate_local_id(cloud);
    Rng rng(2);
    RowMatrix gauss(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) gauss(i, j) = rng.gaussian();
    const Eigen::MatrixXd rotation =
        Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
    PointCloud moved = cloud;
    moved.points = cloud.points * rotation.transpose();
    moved.points.rowwise() += Eigen::RowVector3d(0.3, -1.2, 7.0);
    EXPECT_NEAR(estimate_local_id(moved).dimension, base.dimension, 1e-9);
}

TEST(LocalId, EmbeddingInvarianceIsExact) {
    const PointCloud cloud = generate_hypercube(600, 2, 4);
    const IdEstimate base = estimate_local_id(cloud);
    PointCloud padded;
    padded.points = RowMatrix::Zero(cloud.size(), 7);
    padded.points.leftCols(2) = cloud.points;
    EXPECT_DOUBLE_EQ(estimate_local_id(padded).dimension, base.dimension);
}

TEST(LocalId, MonotoneRecoveryAcrossDimensions) {
    double previous = 0.0;
    for (int d = 1; d <= 5; ++d) {
        const IdEstimate est =
            estimate_local_id(generate_hypercube(5000, d, 40 + d));
        EXPECT_GT(est.dimension, previous) << "d=" << d;
        previous = est.dimension;
    }
}

TEST(LocalId, SwissRollScaleSeparationLocalSide) {
    const IdEstimate thin = estimate_local_id(generate_swiss_roll(4000, 0.0, 2));
    EXPECT_GT(thin.dimension, 1.7);
    EXPECT_LT(thin.dimension, 2.3);
    const IdEstimate thick = estimate_local_id(generate_swiss_roll(8000, 1.5, 2));
    EXPECT_GT(thick.dimension, 2.5);
    EXPECT_LT(thick.dimension, 3.5);
}
