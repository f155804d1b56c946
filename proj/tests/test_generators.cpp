#include "idprobe/generators.hpp"

#include "gtest/gtest.h"

#include <cmath>

using namespace idprobe;

TEST(Hypercube, EmptyCloudKeepsDimension) {
    const PointCloud cloud = generate_hypercube(0, 3, 7);
    EXPECT_EQ(cloud.size(), 0);
    EXPECT_EQ(cloud.dim(), 3);
}

TEST(Hypercube, DeterministicForFixedSeed) {
    const PointCloud a = generate_hypercube(1000, 2, 1);
    const PointCloud b = generate_hypercube(1000, 2, 1);
    EXPECT_TRUE(a.points == b.points);
}

TEST(Hypercube, CoordinatesInUnitCube) {
    const PointCloud cloud = generate_hypercube(500, 4, 3);
    EXPECT_GE(cloud.points.minCoeff(), 0.0);
    EXPECT_LT(cloud.points.maxCoeff(), 1.0);
}

TEST(Hypercube, RejectsBadArguments) {
    EXPECT_THROW(generate_hypercube(-1, 2, 0), UsageError);
    EXPECT_THROW(generate_hypercube(10, 0, 0), UsageError);
}

TEST(Hypersphere, UnitNorms) {
    const PointCloud cloud = generate_hypersphere(4, 1, 0);
    EXPECT_EQ(cloud.dim(), 2);
    for (int i = 0; i < cloud.size(); ++i)
        EXPECT_NEAR(cloud.points.row(i).norm(), 1.0, 1e-12);
    const PointCloud big = generate_hypersphere(2000, 5, 8);
    for (int i = 0; i < big.size(); ++i)
        EXPECT_NEAR(big.points.row(i).norm(), 1.0, 1e-12);
}

TEST(Hypersphere, MeanConcentratesAtOrigin) {
    // Monte Carlo concentration: the average of n uniform sphere points has
    // norm O(1/sqrt(n)); 5/sqrt(n) gives a wide safety margin.
    for (const int d : {1, 2, 6}) {
        const int n = 3000;
        const PointCloud cloud = generate_hypersphere(n, d, 100 + d);
        const Eigen::VectorXd mean =
            cloud.points.colwise().mean().transpose();
        EXPECT_LT(mean.norm(), 5.0 / std::sqrt(double(n)));
    }
}

TEST(SwissRoll, ZeroThicknessLiesOnSheet) {
    const PointCloud cloud = generate_swiss_roll(300, 0.0, 5);
    ASSERT_EQ(cloud.dim(), 3);
    for (int i = 0; i < cloud.size(); ++i) {
        const double x = cloud.points(i, 0);
        const double y = cloud.points(i, 1);
        const double radius = std::sqrt(x * x + y * y);
        // on the sheet, radius equals the spiral parameter t = atan2 branch
        EXPECT_GE(radius, 1.5 * M_PI - 1e-9);
        EXPECT_LE(radius, 4.5 * M_PI + 1e-9);
        const double angle = std::atan2(y, x);
        // t and the recovered angle agree modulo 2*pi
        const double wrapped = std::remainder(radius - angle, 2.0 * M_PI);
        EXPECT_NEAR(wrapped, 0.0, 1e-9);
        EXPECT_GE(cloud.points(i, 2), 0.0);
        EXPECT_LE(cloud.points(i, 2), 21.0);
    }
}

TEST(SwissRoll, ThicknessDisplacesAlongNormalOnly) {
    // With a thick roll, the radial residual stays within thickness/2.
    const double thickness = 1.5;
    const PointCloud cloud = generate_swiss_roll(500, thickness, 9);
    for (int i = 0; i < cloud.size(); ++i) {
        const double x = cloud.points(i, 0);
        const double y = cloud.points(i, 1);
        const double radius = std::sqrt(x * x + y * y);
        EXPECT_GE(radius, 1.5 * M_PI - thickness);
        EXPECT_LE(radius, 4.5 * M_PI + thickness);
    }
}

TEST(SwissRoll, DeterministicForFixedSeed) {
    EXPECT_TRUE(generate_swiss_roll(100, 0.5, 3).points ==
                generate_swiss_roll(100, 0.5, 3).points);
}

TEST(ClassManifolds, ShapesAndLabels) {
    ClassManifoldParams params;
    params.n_per_class = 50;
    params.n_classes = 4;
    params.latent_dim = 3;
    params.ambient_dim = 12;
    const PointCloud cloud = generate_class_manifolds(params, 2);
    EXPECT_EQ(cloud.size(), 200);
    EXPECT_EQ(cloud.dim(), 12);
    ASSERT_TRUE(cloud.labels.has_value());
    int counts[4] = {0, 0, 0, 0};
    for (const int label : *cloud.labels) {
        ASSERT_GE(label, 0);
        ASSERT_LT(label, 4);
        ++counts[label];
    }
    for (const int c : counts) EXPECT_EQ(c, 50);
}

TEST(ClassManifolds, ClassPatchIsAffine) {
    // Each class lies on a latent_dim-dimensional affine patch, so the
    // centered class points have matrix rank latent_dim.
    ClassManifoldParams params;
    params.n_per_class = 60;
    params.n_classes = 2;
    params.latent_dim = 3;
    params.ambient_dim = 10;
    const PointCloud cloud = generate_class_manifolds(params, 5);
    const auto groups = split_by_class_indices(cloud);
    for (const auto& [label, rows] : groups) {
        (void)label;
        const PointCloud part = cloud.select_rows(rows);
        RowMatrix centered = part.points;
        centered.rowwise() -= part.points.colwise().mean();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
        const auto& sv = svd.singularValues();
        int rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > 1e-9 * sv(0)) ++rank;
        EXPECT_EQ(rank, 3);
    }
}
