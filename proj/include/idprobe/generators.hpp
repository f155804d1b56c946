#pragma once

#include "idprobe/common.hpp"
#include "idprobe/point_cloud.hpp"

#include <cmath>

namespace idprobe {

/// n points i.i.d. uniform in the unit dim-cube.
inline PointCloud generate_hypercube(int n, int dim, std::uint64_t seed) {
    if (n < 0 || dim < 1)
        throw UsageError("generate_hypercube: need n >= 0 and dim >= 1");
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.resize(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) cloud.points(i, j) = rng.uniform();
    return cloud;
}

/// n points uniform on the unit sphere S^sphere_dim, embedded in
/// sphere_dim+1 coordinates (normalized Gaussian vectors).
inline PointCloud generate_hypersphere(int n, int sphere_dim,
                                       std::uint64_t seed) {
    if (n < 0 || sphere_dim < 1)
        throw UsageError("generate_hypersphere: need n >= 0 and sphere_dim >= 1");
    Rng rng(seed);
    const int dim = sphere_dim + 1;
    PointCloud cloud;
    cloud.points.resize(n, dim);
    for (int i = 0; i < n; ++i) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double g = rng.gaussian();
                cloud.points(i, j) = g;
                norm2 += g * g;
            }
        } while (norm2 == 0.0);
        cloud.points.row(i) /= std::sqrt(norm2);
    }
    return cloud;
}

/// Swiss roll: (t cos t, t sin t, u) with t ~ U[1.5pi, 4.5pi], u ~ U[0, 21],
/// displaced along the local sheet normal by U[-thickness/2, +thickness/2].
/// With thickness 0 the points lie exactly on the 2-sheet; with thickness > 0
/// the sample fills a slab of local dimension 3.
inline PointCloud generate_swiss_roll(int n, double thickness,
                                      std::uint64_t seed) {
    if (n < 0 || thickness < 0.0)
        throw UsageError("generate_swiss_roll: need n >= 0 and thickness >= 0");
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(1.5 * M_PI, 4.5 * M_PI);
        const double u = rng.uniform(0.0, 21.0);
        const double offset =
            thickness > 0.0 ? rng.uniform(-thickness / 2.0, thickness / 2.0)
                            : 0.0;
        // Unit normal of the sheet at parameter t: (b, -a, 0)/sqrt(1+t^2)
        // with a = cos t - t sin t, b = sin t + t cos t.
        const double a = std::cos(t) - t * std::sin(t);
        const double b = std::sin(t) + t * std::cos(t);
        const double inv_norm = 1.0 / std::sqrt(1.0 + t * t);
        cloud.points(i, 0) = t * std::cos(t) + offset * b * inv_norm;
        cloud.points(i, 1) = t * std::sin(t) - offset * a * inv_norm;
        cloud.points(i, 2) = u;
    }
    return cloud;
}

struct ClassManifoldParams {
    int n_per_class = 1000;
    int n_classes = 10;
    int latent_dim = 8;    // intrinsic dimension of each class patch
    int ambient_dim = 100; // embedding dimension
    double patch_scale = 1.0;
    double center_scale = 4.0;
};

/// Labeled synthetic dataset: each class is a flat latent_dim-dimensional
/// patch (random affine image of U[-1,1]^latent) placed at a random center
/// in ambient_dim coordinates. Ground-truth local dimension per class is
/// latent_dim; classes are linearly separable for center_scale large enough.
inline PointCloud generate_class_manifolds(const ClassManifoldParams& params,
                                           std::uint64_t seed) {
    if (params.n_per_class < 0 || params.n_classes < 1 ||
        params.latent_dim < 1 || params.ambient_dim < params.latent_dim)
        throw UsageError("generate_class_manifolds: invalid parameters");
    Rng rng(seed);
    const int total = params.n_per_class * params.n_classes;
    PointCloud cloud;
    cloud.points.resize(total, params.ambient_dim);
    std::vector<int> labels(std::size_t(total), 0);
    int row = 0;
    for (int c = 0; c < params.n_classes; ++c) {
        RowMatrix basis(params.ambient_dim, params.latent_dim);
        for (int i = 0; i < params.ambient_dim; ++i)
            for (int j = 0; j < params.latent_dim; ++j)
                basis(i, j) = rng.gaussian() / std::sqrt(double(params.latent_dim));
        Eigen::VectorXd center(params.ambient_dim);
        for (int i = 0; i < params.ambient_dim; ++i)
            center(i) = params.center_scale * rng.gaussian() /
                        std::sqrt(double(params.ambient_dim));
        Eigen::VectorXd latent(params.latent_dim);
        for (int s = 0; s < params.n_per_class; ++s, ++row) {
            for (int j = 0; j < params.latent_dim; ++j)
                latent(j) = rng.uniform(-1.0, 1.0);
            cloud.points.row(row) =
                (center + params.patch_scale * (basis * latent)).transpose();
            labels[std::size_t(row)] = c;
        }
    }
    cloud.labels = std::move(labels);
    return cloud;
}

}  // namespace idprobe
