#pragma once

#include "idprobe/common.hpp"
#include "idprobe/neighbors.hpp"
#include "idprobe/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace idprobe {

enum class IdMethod { local, global };

inline const char* to_string(IdMethod method) {
    return method == IdMethod::local ? "local" : "global";
}

/// Scalar dimensionality with a 95% confidence band.
struct IdEstimate {
    double dimension = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    IdMethod method = IdMethod::local;
    int n_used = 0;

    struct Diagnostics {
        int dropped_duplicates = 0;
        // Fitted-curve samples (x, y, fitted y) for reporting; downsampled.
        std::vector<double> curve_x;
        std::vector<double> curve_y;
        std::vector<double> curve_fit;
        // Per-candidate errors for the global method.
        std::vector<int> candidate_dims;
        std::vector<double> candidate_errors;
    } diagnostics;
};

/// Ratio of second to first nearest-neighbor distance per point. Points
/// whose first neighbor distance is 0 (duplicates) are dropped and counted.
struct RatioSample {
    std::vector<double> ratios;
    int dropped_duplicates = 0;
};

inline RatioSample nn_ratios(const NeighborTable& table) {
    if (table.k < 2)
        throw UsageError("nn_ratios: neighbor table needs k >= 2");
    RatioSample sample;
    sample.ratios.reserve(std::size_t(table.distances.rows()));
    for (Eigen::Index i = 0; i < table.distances.rows(); ++i) {
        const double r1 = table.distances(i, 0);
        const double r2 = table.distances(i, 1);
        if (r1 == 0.0) {
            ++sample.dropped_duplicates;
            continue;
        }
        sample.ratios.push_back(r2 / r1);
    }
    if (sample.ratios.empty())
        throw NumericalError("local-id: no usable ratios (all points duplicated)");
    return sample;
}

/// Least-squares line through the origin on (log rho_i, -log(1 - F_i)) with
/// F_i = i/(M+1), after dropping the top ceil(discard_fraction * M) ratios.
struct RatioFit {
    double slope = 0.0;
    double slope_se = 0.0;
    int n_used = 0;
    std::vector<double> xs, ys;
};

inline RatioFit fit_ratio_slope(std::vector<double> ratios,
                                double discard_fraction) {
    if (discard_fraction < 0.0 || discard_fraction >= 1.0)
        throw UsageError("local-id: discard_fraction must be in [0, 1)");
    std::sort(ratios.begin(), ratios.end());
    const int m = int(ratios.size());
    const int discard = int(std::ceil(discard_fraction * m));
    const int used = m - discard;
    if (used < 2)
        throw NumericalError("local-id: too few ratios after tail discard");

    RatioFit fit;
    fit.n_used = used;
    fit.xs.resize(std::size_t(used));
    fit.ys.resize(std::size_t(used));
    double sum_xx = 0.0, sum_xy = 0.0;
    for (int i = 0; i < used; ++i) {
        const double x = std::log(ratios[std::size_t(i)]);
        const double y = -std::log(1.0 - double(i + 1) / double(m + 1));
        fit.xs[std::size_t(i)] = x;
        fit.ys[std::size_t(i)] = y;
        sum_xx += x * x;
        sum_xy += x * y;
    }
    if (sum_xx == 0.0)
        throw NumericalError("local-id: degenerate data, all ratios equal 1");
    fit.slope = sum_xy / sum_xx;
    double ss_residual = 0.0;
    for (int i = 0; i < used; ++i) {
        const double e = fit.ys[std::size_t(i)] - fit.slope * fit.xs[std::size_t(i)];
        ss_residual += e * e;
    }
    fit.slope_se =
        used > 1 ? std::sqrt(ss_residual / (double(used - 1) * sum_xx)) : 0.0;
    return fit;
}

struct LocalIdOptions {
    double discard_fraction = 0.1;  // top ratio tail treated as noise
    int n_threads = 0;
};

/// Local intrinsic dimension from the scaling of nearest-neighbor distance
/// ratios: the slope of the through-origin fit above is the dimension, and
/// the 95% band is +-1.96 standard errors of the slope.
inline IdEstimate estimate_local_id(const PointCloud& cloud,
                                    LocalIdOptions opts = {}) {
    if (cloud.size() < 3)
        throw NumericalError("local-id: need at least 20 points, got " +
                             std::to_string(cloud.size()));
    KnnOptions knn_opts;
    knn_opts.n_threads = opts.n_threads;
    const NeighborTable table = knn(cloud, 2, knn_opts);
    RatioSample sample = nn_ratios(table);
    if (int(sample.ratios.size()) < 20)
        throw NumericalError(
            "local-id: need at least 20 points after duplicate removal, got " +
            std::to_string(sample.ratios.size()));
    const RatioFit fit =
        fit_ratio_slope(std::move(sample.ratios), opts.discard_fraction);

    IdEstimate est;
    est.dimension = fit.slope;
    est.ci_low = fit.slope - 1.96 * fit.slope_se;
    est.ci_high = fit.slope + 1.96 * fit.slope_se;
    est.method = IdMethod::local;
    est.n_used = fit.n_used;
    est.diagnostics.dropped_duplicates = sample.dropped_duplicates;
    const int stride = std::max(1, fit.n_used / 256);
    for (int i = 0; i < fit.n_used; i += stride) {
        est.diagnostics.curve_x.push_back(fit.xs[std::size_t(i)]);
        est.diagnostics.curve_y.push_back(fit.ys[std::size_t(i)]);
        est.diagnostics.curve_fit.push_back(fit.slope * fit.xs[std::size_t(i)]);
    }
    return est;
}

}  // namespace idprobe
