#pragma once

#include "idprobe/common.hpp"
#include "idprobe/generators.hpp"
#include "idprobe/local_id.hpp"
#include "idprobe/neighbors.hpp"
#include "idprobe/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

namespace idprobe {

/// Normalized histogram of a distance sample. Densities integrate to 1;
/// the mode is the center of the highest-density bin (ties toward the
/// smaller distance) and the spread is the sample standard deviation.
struct DistanceHistogram {
    std::vector<double> bin_edges;  // ascending, size bins+1
    std::vector<double> densities;  // size bins
    double mode = 0.0;
    double spread = 0.0;
    std::int64_t sample_count = 0;

    int bins() const { return int(densities.size()); }

    /// Histogram density at r (piecewise constant, 0 outside the range).
    double density_at(double r) const {
        const double lo = bin_edges.front();
        const double hi = bin_edges.back();
        if (r < lo || r > hi || hi <= lo) return 0.0;
        const double width = (hi - lo) / double(bins());
        int bin = int((r - lo) / width);
        if (bin >= bins()) bin = bins() - 1;
        return densities[std::size_t(bin)];
    }

    /// Interpolated quantile (q in [0,1]) from the cumulative bin mass.
    double quantile(double q) const {
        const double target = q * double(sample_count);
        const double lo = bin_edges.front();
        const double hi = bin_edges.back();
        if (hi <= lo) return lo;
        const double width = (hi - lo) / double(bins());
        double cum = 0.0;
        for (int b = 0; b < bins(); ++b) {
            const double mass = densities[std::size_t(b)] * width * double(sample_count);
            if (cum + mass >= target && mass > 0.0) {
                const double frac = (target - cum) / mass;
                return bin_edges[std::size_t(b)] + frac * width;
            }
            cum += mass;
        }
        return hi;
    }
};

namespace detail {

/// Rice rule bin count.
inline int rice_bins(std::int64_t m) {
    return std::max(1, int(std::ceil(2.0 * std::cbrt(double(m)))));
}

inline DistanceHistogram histogram_from_sample(const std::vector<double>& sample) {
    DistanceHistogram hist;
    const std::int64_t m = std::int64_t(sample.size());
    hist.sample_count = m;
    double lo = sample[0], hi = sample[0];
    double sum = 0.0;
    for (const double v : sample) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
    }
    const double mean = sum / double(m);
    double ss = 0.0;
    for (const double v : sample) ss += (v - mean) * (v - mean);
    hist.spread = m > 1 ? std::sqrt(ss / double(m - 1)) : 0.0;

    if (hi <= lo) {
        // All distances equal: a single zero-width bin; callers treat
        // spread 0 as degenerate.
        hist.bin_edges = {lo, hi};
        hist.densities = {0.0};
        hist.mode = lo;
        return hist;
    }
    const int bins = rice_bins(m);
    const double width = (hi - lo) / double(bins);
    std::vector<std::int64_t> counts(std::size_t(bins), 0);
    for (const double v : sample) {
        int b = int((v - lo) / width);
        if (b >= bins) b = bins - 1;
        ++counts[std::size_t(b)];
    }
    hist.bin_edges.resize(std::size_t(bins) + 1);
    for (int b = 0; b <= bins; ++b)
        hist.bin_edges[std::size_t(b)] = lo + width * double(b);
    hist.densities.resize(std::size_t(bins));
    int mode_bin = 0;
    for (int b = 0; b < bins; ++b) {
        hist.densities[std::size_t(b)] =
            double(counts[std::size_t(b)]) / (double(m) * width);
        if (counts[std::size_t(b)] > counts[std::size_t(mode_bin)]) mode_bin = b;
    }
    hist.mode = lo + width * (double(mode_bin) + 0.5);
    return hist;
}

}  // namespace detail

/// Histogram of the finite pairwise geodesic distances (upper triangle,
/// self-pairs and unreachable pairs excluded).
inline DistanceHistogram distance_distribution(const GeodesicDistances& geo) {
    const int n = geo.source_count;
    std::vector<double> sample;
    sample.reserve(std::size_t(n) * std::size_t(std::max(0, n - 1)) / 2);
    std::int64_t total = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            ++total;
            if (geo.reachable(i, j)) sample.push_back(geo.values(i, j));
        }
    }
    if (std::int64_t(sample.size()) < 100) {
        const double fraction =
            total > 0 ? double(sample.size()) / double(total) : 0.0;
        throw NumericalError(
            "global-id: only " + std::to_string(sample.size()) +
            " finite pairwise distances (connectivity fraction " +
            std::to_string(fraction) + "), need at least 100");
    }
    return detail::histogram_from_sample(sample);
}

// ---------------------------------------------------------------------------
// Hypersphere reference distributions.
// ---------------------------------------------------------------------------

/// Pairwise metric used for the reference sample. `chord` is the straight
/// Euclidean distance between surface points; `arc` is the exact great-circle
/// distance, which is the right counterpart of graph geodesics.
enum class ReferenceMetric { chord, arc };

inline const char* to_string(ReferenceMetric metric) {
    return metric == ReferenceMetric::chord ? "chord" : "arc";
}

struct HypersphereReference {
    int dim = 0;
    int m_samples = 0;
    std::uint64_t seed = 0;
    ReferenceMetric metric = ReferenceMetric::arc;
    DistanceHistogram hist;
};

/// Empirical distribution of all pairwise distances between m_samples points
/// uniform on the unit sphere S^d, binned with the same Rice-rule convention
/// as distance_distribution. Deterministic per (d, m_samples, seed, metric).
///
/// Both metrics are monotone in the pairwise dot product (chord^2 = 2 - 2g,
/// arc = acos g), so binning happens in dot-product space: bin edges are
/// mapped through the inverse metric once and each of the ~m^2/2 pairs costs
/// a table lookup instead of an acos. The spread is computed from the bin
/// masses; with Rice-rule bin counts the discretization error is far below
/// the estimator's resolution.
inline HypersphereReference hypersphere_reference(
    int d, int m_samples = 10000, std::uint64_t seed = 0,
    ReferenceMetric metric = ReferenceMetric::chord, int n_threads = 0) {
    if (d < 1) throw UsageError("hypersphere_reference: d must be >= 1");
    if (m_samples < 2)
        throw UsageError("hypersphere_reference: need at least 2 samples");
    if (n_threads <= 0) n_threads = default_thread_count();

    const PointCloud cloud = generate_hypersphere(m_samples, d, seed);
    const RowMatrix& pts = cloud.points;
    const int m = m_samples;
    // Upper-triangle dot products are produced in cache-sized tiles and
    // consumed immediately; the O(m^2) dot matrix never touches memory.
    constexpr int kRows = 128;
    constexpr int kCols = 2048;
    const int n_blocks = (m + kRows - 1) / kRows;

    // scan(chunk, row_values, length) sees each upper-triangle row segment
    // exactly once; chunks are fixed so per-chunk accumulators merge
    // deterministically.
    const auto scan_dots = [&](auto&& consume) {
        parallel_chunks(n_blocks, n_threads,
                        [&](int chunk, std::int64_t begin, std::int64_t end) {
            RowMatrix tile(kRows, kCols);
            for (std::int64_t block = begin; block < end; ++block) {
                const int i0 = int(block) * kRows;
                const int rows = std::min(kRows, m - i0);
                for (int c0 = i0 + 1; c0 < m; c0 += kCols) {
                    const int cols = std::min(kCols, m - c0);
                    tile.topLeftCorner(rows, cols).noalias() =
                        pts.middleRows(i0, rows) *
                        pts.middleRows(c0, cols).transpose();
                    for (int r = 0; r < rows; ++r) {
                        const int i = i0 + r;
                        const int j_first = std::max(c0, i + 1);
                        const int offset = j_first - c0;
                        const int len = cols - offset;
                        if (len <= 0) continue;
                        consume(chunk, tile.data() + std::size_t(r) * kCols + offset,
                                len);
                    }
                }
            }
        });
    };

    const auto to_distance = [metric](double dot) {
        if (metric == ReferenceMetric::chord)
            return std::sqrt(std::max(0.0, 2.0 - 2.0 * dot));
        return std::acos(std::clamp(dot, -1.0, 1.0));
    };
    const auto to_dot = [metric](double dist) {
        if (metric == ReferenceMetric::chord)
            return 1.0 - dist * dist / 2.0;
        return std::cos(dist);
    };

    // Pass 1: dot-product extrema (distance extrema by monotonicity).
    std::vector<double> chunk_min(std::size_t(n_threads),
                                  std::numeric_limits<double>::infinity());
    std::vector<double> chunk_max(std::size_t(n_threads),
                                  -std::numeric_limits<double>::infinity());
    scan_dots([&](int chunk, const double* values, int len) {
        const auto seg = Eigen::Map<const Eigen::ArrayXd>(values, len);
        chunk_min[std::size_t(chunk)] =
            std::min(chunk_min[std::size_t(chunk)], seg.minCoeff());
        chunk_max[std::size_t(chunk)] =
            std::max(chunk_max[std::size_t(chunk)], seg.maxCoeff());
    });
    double dot_lo = std::numeric_limits<double>::infinity();
    double dot_hi = -dot_lo;
    for (int c = 0; c < n_threads; ++c) {
        dot_lo = std::min(dot_lo, chunk_min[std::size_t(c)]);
        dot_hi = std::max(dot_hi, chunk_max[std::size_t(c)]);
    }
    const std::int64_t total = std::int64_t(m) * (m - 1) / 2;
    const double lo = to_distance(dot_hi);  // max dot -> min distance
    const double hi = to_distance(dot_lo);

    HypersphereReference ref;
    ref.dim = d;
    ref.m_samples = m_samples;
    ref.seed = seed;
    ref.metric = metric;
    ref.hist.sample_count = total;
    if (hi <= lo) {
        ref.hist.bin_edges = {lo, hi};
        ref.hist.densities = {0.0};
        ref.hist.mode = lo;
        ref.hist.spread = 0.0;
        return ref;
    }

    // Distance-space bin edges mapped to descending dot-product thresholds.
    const int bins = detail::rice_bins(total);
    const double width = (hi - lo) / double(bins);
    ref.hist.bin_edges.resize(std::size_t(bins) + 1);
    for (int b = 0; b <= bins; ++b)
        ref.hist.bin_edges[std::size_t(b)] = lo + width * double(b);
    // ascending_dots[p] = dot threshold of distance edge (bins - p).
    std::vector<double> ascending_dots(std::size_t(bins) + 1);
    for (int b = 0; b <= bins; ++b)
        ascending_dots[std::size_t(bins - b)] = to_dot(ref.hist.bin_edges[std::size_t(b)]);

    // O(1) bin lookup: a fine uniform grid over the dot range maps each dot
    // to a starting bin; distances grow as dots shrink, so at most a few
    // forward steps correct the guess.
    const int cells = std::max(1024, bins * 8);
    const double cell_scale = double(cells) / (dot_hi - dot_lo);
    std::vector<int> cell_bin(std::size_t(cells) + 1, 0);
    for (int cell = 0; cell <= cells; ++cell) {
        const double g = dot_hi - double(cell) / cell_scale;  // descending dot
        const auto it =
            std::upper_bound(ascending_dots.begin(), ascending_dots.end(), g);
        int bin = bins - int(it - ascending_dots.begin());
        cell_bin[std::size_t(cell)] =
            std::clamp(bin, 0, bins - 1);
    }

    // Pass 2: bin counts (order-free integer merges).
    std::vector<std::vector<std::int64_t>> partial(
        std::size_t(n_threads), std::vector<std::int64_t>(std::size_t(bins), 0));
    scan_dots([&](int chunk, const double* values, int len) {
        std::vector<std::int64_t>& counts = partial[std::size_t(chunk)];
        for (int t = 0; t < len; ++t) {
            const double g = values[t];
            const int cell =
                std::clamp(int((dot_hi - g) * cell_scale), 0, cells);
            int bin = cell_bin[std::size_t(cell)];
            // The cell guess can be off by a bin or two; walk until the dot
            // lies inside the bin's threshold bracket.
            while (bin > 0 && g > ascending_dots[std::size_t(bins - bin)])
                --bin;
            while (bin < bins - 1 &&
                   g <= ascending_dots[std::size_t(bins - bin - 1)])
                ++bin;
            ++counts[std::size_t(bin)];
        }
    });
    std::vector<std::int64_t> counts(std::size_t(bins), 0);
    for (const auto& p : partial)
        for (int b = 0; b < bins; ++b) counts[std::size_t(b)] += p[std::size_t(b)];

    ref.hist.densities.resize(std::size_t(bins));
    int mode_bin = 0;
    double mean = 0.0, meansq = 0.0;
    for (int b = 0; b < bins; ++b) {
        ref.hist.densities[std::size_t(b)] =
            double(counts[std::size_t(b)]) / (double(total) * width);
        if (counts[std::size_t(b)] > counts[std::size_t(mode_bin)]) mode_bin = b;
        const double center = lo + width * (double(b) + 0.5);
        const double mass = double(counts[std::size_t(b)]) / double(total);
        mean += mass * center;
        meansq += mass * center * center;
    }
    ref.hist.mode = lo + width * (double(mode_bin) + 0.5);
    ref.hist.spread = std::sqrt(std::max(0.0, meansq - mean * mean));
    return ref;
}

/// Process-wide cache; references are immutable once built.
inline std::shared_ptr<const HypersphereReference> cached_hypersphere_reference(
    int d, int m_samples, std::uint64_t seed, ReferenceMetric metric,
    int n_threads = 0) {
    using Key = std::tuple<int, int, std::uint64_t, ReferenceMetric>;
    static std::map<Key, std::shared_ptr<const HypersphereReference>> cache;
    static std::mutex mutex;
    const Key key{d, m_samples, seed, metric};
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto ref = std::make_shared<const HypersphereReference>(
        hypersphere_reference(d, m_samples, seed, metric, n_threads));
    cache.emplace(key, ref);
    return ref;
}

// ---------------------------------------------------------------------------
// Global estimator.
// ---------------------------------------------------------------------------

/// How the reference is mapped onto the data axis before comparison.
/// `mode` aligns the raw histogram modes; `median` aligns the sample
/// medians; `fitted` picks, per candidate, the axis rescale and amplitude
/// that minimize the window error itself (seeded at the median ratio).
/// The raw mode is noisy wherever the distribution is flat near its peak,
/// and medians drift into the tail for skewed distributions; fitting the
/// scale is robust to both, and fitting the amplitude lets heavy-tailed
/// distance distributions (whose mass extends far beyond the mode window)
/// be compared by shape alone, which is the property that carries the
/// dimension.
enum class ReferenceAlignment { mode, median, fitted };

struct GlobalIdOptions {
    int k = 20;
    int d_min = 1;
    int d_max = 50;
    int ref_samples = 10000;
    std::uint64_t ref_seed = 0;
    ReferenceMetric metric = ReferenceMetric::arc;
    ReferenceAlignment alignment = ReferenceAlignment::fitted;
    int grid_points = 64;
    double ci_error_band = 0.05;  // candidates within 5% of the best error
    int n_threads = 0;
};

namespace detail {

struct GeodesicSample {
    std::vector<double> distances;  // upper triangle of the component
    int component_size = 0;
    double discarded_fraction = 0.0;
};

inline GeodesicSample geodesic_distance_sample(const KnnGraph& graph,
                                               int n_threads) {
    GeodesicSample out;
    const std::vector<int> component = largest_component(graph);
    out.component_size = int(component.size());
    out.discarded_fraction =
        1.0 - double(component.size()) / double(std::max(1, graph.n));
    const KnnGraph sub = induced_subgraph(graph, component);
    const std::int64_t n = sub.n;
    out.distances.resize(std::size_t(n * (n - 1) / 2));
    parallel_chunks(n, n_threads, [&](int, std::int64_t begin, std::int64_t end) {
        std::vector<double> row(std::size_t(n), 0.0);
        for (std::int64_t i = begin; i < end; ++i) {
            dijkstra(sub, int(i), row.data());
            const std::int64_t offset = i * (n - 1) - i * (i - 1) / 2 - i - 1;
            for (std::int64_t j = i + 1; j < n; ++j)
                out.distances[std::size_t(offset + j)] = row[std::size_t(j)];
        }
    });
    return out;
}

inline double alignment_scale(const DistanceHistogram& data,
                              const DistanceHistogram& ref,
                              ReferenceAlignment alignment) {
    double data_stat = 0.0, ref_stat = 0.0;
    if (alignment == ReferenceAlignment::mode) {
        data_stat = data.mode;
        ref_stat = ref.mode;
    } else {
        data_stat = data.quantile(0.5);
        ref_stat = ref.quantile(0.5);
    }
    return ref_stat > 0.0 ? data_stat / ref_stat : 1.0;
}

}  // namespace detail

/// Global intrinsic dimension: the geodesic distance distribution around its
/// mode r_m is compared, over the window [r_m - r_sigma, r_m + r_sigma/2],
/// against rescaled hypersphere reference distributions; the candidate d
/// with the least squared density error wins. The confidence interval covers
/// every candidate whose error is within ci_error_band of the minimum.
inline IdEstimate estimate_global_id(const PointCloud& cloud,
                                     GlobalIdOptions opts = {}) {
    if (cloud.size() < 100)
        throw NumericalError("global-id: need at least 100 points, got " +
                             std::to_string(cloud.size()));
    if (opts.k < 1 || opts.k >= cloud.size())
        throw UsageError("global-id: k must satisfy 1 <= k < N");
    if (opts.d_min < 1 || opts.d_max < opts.d_min)
        throw UsageError("global-id: need 1 <= d_min <= d_max");
    const int n_threads =
        opts.n_threads > 0 ? opts.n_threads : default_thread_count();

    KnnOptions knn_opts;
    knn_opts.n_threads = n_threads;
    const NeighborTable table = knn(cloud, opts.k, knn_opts);
    const KnnGraph graph = knn_graph(table);
    const detail::GeodesicSample sample =
        detail::geodesic_distance_sample(graph, n_threads);
    if (sample.discarded_fraction > 0.5)
        throw NumericalError(
            "global-id: graph too disconnected, largest component holds only " +
            std::to_string(sample.component_size) + " of " +
            std::to_string(cloud.size()) + " points");
    if (std::int64_t(sample.distances.size()) < 100)
        throw NumericalError("global-id: fewer than 100 pairwise distances");

    const DistanceHistogram data = detail::histogram_from_sample(sample.distances);
    if (data.spread <= 0.0)
        throw NumericalError("global-id: degenerate distance distribution "
                             "(zero spread)");

    const double window_lo = data.mode - data.spread;
    const double window_hi = data.mode + 0.5 * data.spread;
    const int grid = std::max(2, opts.grid_points);

    IdEstimate est;
    est.method = IdMethod::global;
    est.n_used = sample.component_size;
    double best_error = std::numeric_limits<double>::infinity();
    int best_d = opts.d_min;
    for (int d = opts.d_min; d <= opts.d_max; ++d) {
        const auto ref = cached_hypersphere_reference(
            d, opts.ref_samples, opts.ref_seed, opts.metric, n_threads);

        // Squared density mismatch over the window at a given axis rescale.
        // Stretching the axis by `scale` divides the density by the same
        // factor (change of variables). When fit_amplitude is set, the
        // best nonnegative amplitude is solved in closed form first.
        const bool fit_amplitude =
            opts.alignment == ReferenceAlignment::fitted;
        std::vector<double> p_data(std::size_t(grid), 0.0);
        for (int g = 0; g < grid; ++g) {
            const double r = window_lo + (window_hi - window_lo) *
                                             double(g) / double(grid - 1);
            p_data[std::size_t(g)] = data.density_at(r);
        }
        const auto window_error = [&](double scale) {
            double ref_ref = 0.0, ref_dat = 0.0;
            std::vector<double> p_ref(std::size_t(grid), 0.0);
            for (int g = 0; g < grid; ++g) {
                const double r = window_lo + (window_hi - window_lo) *
                                                 double(g) / double(grid - 1);
                const double p =
                    scale > 0.0 ? ref->hist.density_at(r / scale) / scale : 0.0;
                p_ref[std::size_t(g)] = p;
                ref_ref += p * p;
                ref_dat += p * p_data[std::size_t(g)];
            }
            const double amplitude =
                fit_amplitude && ref_ref > 0.0
                    ? std::max(0.0, ref_dat / ref_ref)
                    : 1.0;
            double error = 0.0;
            for (int g = 0; g < grid; ++g) {
                const double diff =
                    p_data[std::size_t(g)] - amplitude * p_ref[std::size_t(g)];
                error += diff * diff;
            }
            return error;
        };

        double error;
        if (opts.alignment == ReferenceAlignment::fitted) {
            // Coarse log-scale sweep around the median ratio, then a
            // golden-section refinement of the best bracket.
            const double s0 = detail::alignment_scale(
                data, ref->hist, ReferenceAlignment::median);
            constexpr int kCoarse = 57;
            constexpr double kLogRange = 0.7;
            double best_u = 0.0;
            double coarse_best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < kCoarse; ++i) {
                const double u =
                    -kLogRange + 2.0 * kLogRange * double(i) / double(kCoarse - 1);
                const double e = window_error(s0 * std::exp(u));
                if (e < coarse_best) {
                    coarse_best = e;
                    best_u = u;
                }
            }
            const double step = 2.0 * kLogRange / double(kCoarse - 1);
            double a = best_u - step, b = best_u + step;
            constexpr double kGolden = 0.6180339887498949;
            double x1 = b - kGolden * (b - a);
            double x2 = a + kGolden * (b - a);
            double e1 = window_error(s0 * std::exp(x1));
            double e2 = window_error(s0 * std::exp(x2));
            for (int iter = 0; iter < 40; ++iter) {
                if (e1 < e2) {
                    b = x2;
                    x2 = x1;
                    e2 = e1;
                    x1 = b - kGolden * (b - a);
                    e1 = window_error(s0 * std::exp(x1));
                } else {
                    a = x1;
                    x1 = x2;
                    e1 = e2;
                    x2 = a + kGolden * (b - a);
                    e2 = window_error(s0 * std::exp(x2));
                }
            }
            error = std::min({coarse_best, e1, e2});
        } else {
            error = window_error(
                detail::alignment_scale(data, ref->hist, opts.alignment));
        }

        est.diagnostics.candidate_dims.push_back(d);
        est.diagnostics.candidate_errors.push_back(error);
        if (error < best_error) {
            best_error = error;
            best_d = d;
        }
    }

    int ci_lo = best_d, ci_hi = best_d;
    for (std::size_t i = 0; i < est.diagnostics.candidate_dims.size(); ++i) {
        if (est.diagnostics.candidate_errors[i] <=
            best_error * (1.0 + opts.ci_error_band)) {
            ci_lo = std::min(ci_lo, est.diagnostics.candidate_dims[i]);
            ci_hi = std::max(ci_hi, est.diagnostics.candidate_dims[i]);
        }
    }
    est.dimension = double(best_d);
    est.ci_low = double(ci_lo);
    est.ci_high = double(ci_hi);
    return est;
}

}  // namespace idprobe
