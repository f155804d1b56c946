// Acceptance suite: one check per numbered criterion, each printing a
// single PASS/FAIL line with the measured values and the tolerance it was
// gated against. Criteria 6, 7 and 8 share trained networks and run as one
// block. Usage: acceptance [N | all]

#include "idprobe/generators.hpp"
#include "idprobe/global_id.hpp"
#include "idprobe/local_id.hpp"
#include "idprobe/mlp.hpp"
#include "idprobe/probe.hpp"
#include "idprobe/theory.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

using namespace idprobe;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int criterion, bool passed, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", passed ? "PASS" : "FAIL", criterion,
                detail.c_str());
    std::fflush(stdout);
}

std::string fmt(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

// --------------------------------------------------------------------------
// 1. Local estimator calibration: uniform hypercubes d in {1..5}, N = 5000,
//    5 seeds; the mean estimate must land within +-15% of d and each
//    estimate must take under 10 seconds.
// --------------------------------------------------------------------------
bool criterion_1() {
    bool passed = true;
    std::string detail;
    for (int d = 1; d <= 5; ++d) {
        double sum = 0.0;
        double slowest = 0.0;
        for (int seed = 0; seed < 5; ++seed) {
            const PointCloud cloud =
                generate_hypercube(5000, d, std::uint64_t(10 * d + seed));
            const auto start = Clock::now();
            const IdEstimate est = estimate_local_id(cloud);
            slowest = std::max(slowest, seconds_since(start));
            sum += est.dimension;
        }
        const double mean = sum / 5.0;
        const bool in_band = std::abs(mean - d) <= 0.15 * d;
        const bool fast = slowest < 10.0;
        passed = passed && in_band && fast;
        detail += "d=" + std::to_string(d) + ": mean " + fmt(mean) + " (" +
                  fmt(slowest, 2) + "s) ";
    }
    report(1, passed, "local calibration within 15% on hypercubes — " + detail);
    return passed;
}

// --------------------------------------------------------------------------
// 2. Global estimator calibration: hyperspheres S^d, d in {1,2,3,5},
//    N = 3000; the selected integer d must be exact in at least 4 of 5
//    seeds per d, each case under 60 seconds.
// --------------------------------------------------------------------------
bool criterion_2() {
    bool passed = true;
    std::string detail;
    GlobalIdOptions opts;  // library defaults: k=20, d in [1,50]
    for (const int d : {1, 2, 3, 5}) {
        int exact = 0;
        double slowest = 0.0;
        for (int seed = 0; seed < 5; ++seed) {
            const PointCloud cloud =
                generate_hypersphere(3000, d, std::uint64_t(100 * d + seed));
            const auto start = Clock::now();
            const IdEstimate est = estimate_global_id(cloud, opts);
            slowest = std::max(slowest, seconds_since(start));
            if (int(est.dimension) == d) ++exact;
        }
        const bool enough = exact >= 4;
        const bool fast = slowest < 60.0;
        passed = passed && enough && fast;
        detail += "S^" + std::to_string(d) + ": " + std::to_string(exact) +
                  "/5 exact (" + fmt(slowest, 1) + "s) ";
    }
    report(2, passed, "global calibration on hyperspheres — " + detail);
    return passed;
}

// --------------------------------------------------------------------------
// 3. Swiss-roll scale separation: thickness-0 roll (N=4000) has local ID in
//    [1.7, 2.3] and global ID exactly 2; the thick roll (thickness 1.5,
//    N=8000) has local ID in [2.5, 3.5] and global ID exactly 2.
// --------------------------------------------------------------------------
bool criterion_3() {
    GlobalIdOptions opts;
    const PointCloud thin = generate_swiss_roll(4000, 0.0, 2);
    const IdEstimate thin_local = estimate_local_id(thin);
    const IdEstimate thin_global = estimate_global_id(thin, opts);
    const PointCloud thick = generate_swiss_roll(8000, 1.5, 2);
    const IdEstimate thick_local = estimate_local_id(thick);
    const IdEstimate thick_global = estimate_global_id(thick, opts);

    const bool passed = thin_local.dimension > 1.7 && thin_local.dimension < 2.3 &&
                        int(thin_global.dimension) == 2 &&
                        thick_local.dimension > 2.5 && thick_local.dimension < 3.5 &&
                        int(thick_global.dimension) == 2;
    report(3, passed,
           "swiss-roll scale separation — thin: local " +
               fmt(thin_local.dimension) + " in [1.7,2.3], global " +
               fmt(thin_global.dimension, 0) + " == 2; thick: local " +
               fmt(thick_local.dimension) + " in [2.5,3.5], global " +
               fmt(thick_global.dimension, 0) + " == 2");
    return passed;
}

// --------------------------------------------------------------------------
// 4. Expected noisy loss identity: over 50 random single-output two-layer
//    problems, the 1e5-trial Monte Carlo mean differs from the closed-form
//    expected loss by less than 3 standard errors in at least 47 cases.
// --------------------------------------------------------------------------
bool criterion_4() {
    Rng rng(11);
    int within = 0;
    for (int i = 0; i < 50; ++i) {
        const int p = 3 + int(rng.bounded(8));
        const int d = 2 + int(rng.bounded(7));
        const int hidden = 2 + int(rng.bounded(7));
        TwoLayerProblem problem;
        problem.X.resize(p, d);
        for (int r = 0; r < p; ++r)
            for (int c = 0; c < d; ++c) problem.X(r, c) = rng.gaussian();
        problem.Y = RowMatrix::Ones(p, 1);
        problem.w2.resize(1, hidden);
        for (int c = 0; c < hidden; ++c) problem.w2(0, c) = rng.gaussian();
        problem.sigma = 0.05 + 0.45 * rng.uniform();
        RowMatrix w1(hidden, d);
        for (int r = 0; r < hidden; ++r)
            for (int c = 0; c < d; ++c)
                w1(r, c) = rng.gaussian() / std::sqrt(double(d));
        const double expected = effective_loss(problem, w1);
        const MonteCarloLoss mc =
            noisy_loss_mc(problem, w1, 100000, rng.next_u64());
        if (std::abs(mc.mean - expected) < 3.0 * mc.std_error) ++within;
    }
    const bool passed = within >= 47;
    report(4, passed,
           "noisy-loss expectation matches closed form — " +
               std::to_string(within) + "/50 within 3 standard errors (need 47)");
    return passed;
}

// --------------------------------------------------------------------------
// 5. Convergence of noisy SGD to the closed-form minimizer: d=20, H=10,
//    c=3, P=15, fixed random w2, sigma=0.05. The trained W1 must land
//    within 5% relative Frobenius distance of the closed form and have
//    hidden orthogonal ratios below 0.05; the sigma=0 contrast from a unit
//    random init must keep a ratio above 0.2.
// --------------------------------------------------------------------------
double worst_orthogonal_ratio(const TwoLayerProblem& problem,
                              const RowMatrix& w1) {
    const RowMatrix h = problem.X * w1.transpose();
    double worst = 0.0;
    for (int mu = 0; mu < problem.samples(); ++mu) {
        const Eigen::VectorXd h_mu = h.row(mu).transpose();
        if (h_mu.norm() == 0.0) continue;
        worst = std::max(worst, orthogonal_component(h_mu, problem.w2).norm() /
                                    h_mu.norm());
    }
    return worst;
}

bool criterion_5() {
    Rng rng(42);
    TwoLayerProblem problem;
    problem.X.resize(15, 20);
    for (int i = 0; i < 15; ++i)
        for (int j = 0; j < 20; ++j) problem.X(i, j) = rng.gaussian();
    problem.Y = RowMatrix::Zero(15, 3);
    for (int i = 0; i < 15; ++i) problem.Y(i, int(rng.bounded(3))) = 1.0;
    problem.w2.resize(3, 10);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 10; ++j) problem.w2(i, j) = rng.gaussian();
    problem.sigma = 0.05;

    const RowMatrix w1_hat = closed_form_w1(problem);
    NoisySgdConfig config;
    config.steps = 80000;
    config.learning_rate_start = 3e-4;
    config.init_scale = 0.01;
    config.seed = 1000;
    const RowMatrix w1 = fit_w1_sgd(problem, config);
    const double rel = (w1 - w1_hat).norm() / w1_hat.norm();
    const double ratio = worst_orthogonal_ratio(problem, w1);

    TwoLayerProblem noiseless = problem;
    noiseless.sigma = 0.0;
    NoisySgdConfig plain = config;
    plain.init_scale = 1.0;
    plain.seed = 2000;
    const double plain_ratio =
        worst_orthogonal_ratio(noiseless, fit_w1_sgd(noiseless, plain));

    const bool passed = rel < 0.05 && ratio < 0.05 && plain_ratio > 0.2;
    report(5, passed,
           "noisy SGD reaches closed-form W1 — relative Frobenius " + fmt(rel, 4) +
               " < 0.05, orthogonal ratio " + fmt(ratio, 4) +
               " < 0.05, sigma=0 ratio " + fmt(plain_ratio, 3) + " > 0.2");
    return passed;
}

// --------------------------------------------------------------------------
// 6/7/8. Noise-compression experiment: 7 relu layers of width 200 with
// identity hidden init on a 10-class synthetic surrogate (10k points),
// trained with and without sigma=0.005 weight noise over 3 seeds.
//   6a: noisy-trained final-hidden-layer class-averaged local ID below the
//       initialization value; 6b: strictly below the no-noise value;
//       runtime under 30 minutes.
//   7:  mean post-relu / pre-relu local-ID ratio across layers and classes
//       above 1.0 on the plain-trained networks.
//   8:  doubling every hidden width changes the noisy-trained final-layer
//       ID by less than a factor of 1.5 in either direction.
// --------------------------------------------------------------------------
struct CompressionRun {
    double id_init = 0.0;
    double id_plain = 0.0;
    double id_noisy = 0.0;
    double id_noisy_wide = 0.0;
    double relu_ratio_sum = 0.0;
    int relu_ratio_count = 0;
};

MlpModel compression_model(int width, std::uint64_t seed) {
    std::vector<int> widths = {100, width, width, width, width,
                               width, width, width, 10};
    std::vector<Activation> acts(widths.size() - 1, Activation::relu);
    acts.back() = Activation::linear;
    TrainConfig config;
    config.init = InitKind::identity_hidden;
    Rng rng(seed);
    return make_mlp(widths, acts, config, rng);
}

TrainConfig compression_train_config(double sigma, std::uint64_t seed) {
    TrainConfig config;
    config.learning_rate_start = 5e-4;
    config.learning_rate_decay_per_epoch = 5e-4 / 26.0;
    config.epochs = 25;
    config.batch_size = 256;
    config.weight_noise_sigma = sigma;
    config.seed = seed;
    config.init = InitKind::identity_hidden;
    return config;
}

double final_hidden_id(const MlpModel& model, const PointCloud& cloud) {
    ProbeOptions opts;
    opts.methods = {IdMethod::local};
    opts.subsample = 1000;
    opts.seed = 99;
    const ProbeReport report = probe_layers(model, cloud, {7}, opts);
    return report.summaries.front().mean_dimension;
}

bool criteria_6_7_8() {
    const auto start = Clock::now();
    const PointCloud cloud = generate_class_manifolds(ClassManifoldParams{}, 7);
    const LabeledDataset dataset = make_dataset(cloud);

    std::vector<CompressionRun> runs;
    for (const int seed : {1, 2, 3}) {
        CompressionRun run;
        const MlpModel init_model = compression_model(200, seed);
        run.id_init = final_hidden_id(init_model, cloud);

        const TrainResult plain =
            train(init_model, dataset, compression_train_config(0.0, seed));
        run.id_plain = final_hidden_id(plain.model, cloud);

        const TrainResult noisy =
            train(init_model, dataset, compression_train_config(0.005, seed));
        run.id_noisy = final_hidden_id(noisy.model, cloud);

        // relu expansion on the plain-trained network (criterion 7)
        ProbeOptions opts;
        opts.methods = {IdMethod::local};
        opts.subsample = 1000;
        opts.seed = 99;
        opts.include_pre_activation = true;
        const ProbeReport deep =
            probe_layers(plain.model, cloud, {1, 2, 3, 4, 5, 6, 7}, opts);
        const ExpansionRatios ratios =
            relu_expansion_ratios(filter_report(deep, Representation::pre),
                                  filter_report(deep, Representation::post));
        for (const double r : ratios.ratios) run.relu_ratio_sum += r;
        run.relu_ratio_count += int(ratios.ratios.size());

        // doubled widths (criterion 8)
        const MlpModel wide_model = compression_model(400, seed);
        const TrainResult wide =
            train(wide_model, dataset, compression_train_config(0.005, seed));
        run.id_noisy_wide = final_hidden_id(wide.model, cloud);

        runs.push_back(run);
    }

    double init_avg = 0.0, plain_avg = 0.0, noisy_avg = 0.0, wide_avg = 0.0;
    double ratio_sum = 0.0;
    int ratio_count = 0;
    for (const CompressionRun& run : runs) {
        init_avg += run.id_init / double(runs.size());
        plain_avg += run.id_plain / double(runs.size());
        noisy_avg += run.id_noisy / double(runs.size());
        wide_avg += run.id_noisy_wide / double(runs.size());
        ratio_sum += run.relu_ratio_sum;
        ratio_count += run.relu_ratio_count;
    }
    const double elapsed = seconds_since(start);

    const bool c6 = noisy_avg < init_avg && noisy_avg < plain_avg &&
                    elapsed < 30.0 * 60.0;
    report(6, c6,
           "noise compresses the final hidden layer — class-averaged local ID: "
           "init " + fmt(init_avg) + ", trained sigma=0 " + fmt(plain_avg) +
               ", trained sigma=0.005 " + fmt(noisy_avg) +
               " (noisy < init and noisy < plain, 3 seeds, " + fmt(elapsed, 0) +
               "s < 1800s)");

    const double mean_ratio = ratio_sum / double(ratio_count);
    const bool c7 = mean_ratio > 1.0;
    report(7, c7,
           "relu raises local ID — mean post/pre ratio " + fmt(mean_ratio, 4) +
               " > 1.0 over " + std::to_string(ratio_count) +
               " (layer, class) pairs on the sigma=0 networks");

    const double width_ratio = wide_avg / noisy_avg;
    const bool c8 = width_ratio < 1.5 && width_ratio > 1.0 / 1.5;
    report(8, c8,
           "width robustness — final-layer ID " + fmt(noisy_avg) +
               " at width 200 vs " + fmt(wide_avg) +
               " at width 400, ratio " + fmt(width_ratio, 3) +
               " within [0.667, 1.5]");

    return c6 && c7 && c8;
}

// --------------------------------------------------------------------------
// 9. Gradient correctness: analytic vs central finite differences
//    (step 1e-5), relative error below 1e-4 over 20 random model/batch
//    pairs.
// --------------------------------------------------------------------------
bool criterion_9() {
    Rng rng(31);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> widths = {2 + int(rng.bounded(3)),
                                   2 + int(rng.bounded(4)),
                                   1 + int(rng.bounded(3))};
        std::vector<Activation> acts(widths.size() - 1, Activation::relu);
        acts.back() = Activation::linear;
        TrainConfig init;
        Rng model_rng(rng.next_u64());
        MlpModel model = make_mlp(widths, acts, init, model_rng);
        const int batch = 3 + int(rng.bounded(5));
        RowMatrix x(batch, widths.front()), y(batch, widths.back());
        for (int i = 0; i < batch; ++i) {
            for (int j = 0; j < widths.front(); ++j) x(i, j) = rng.gaussian();
            for (int j = 0; j < widths.back(); ++j) y(i, j) = rng.gaussian();
        }
        const Gradients analytic = gradients(model, x, y);
        const double step = 1e-5;
        for (int l = 0; l < model.depth(); ++l) {
            RowMatrix& w = model.layers[std::size_t(l)].weights;
            RowMatrix numeric(w.rows(), w.cols());
            for (int r = 0; r < w.rows(); ++r) {
                for (int c = 0; c < w.cols(); ++c) {
                    const double original = w(r, c);
                    double plus = 0.0, minus = 0.0;
                    w(r, c) = original + step;
                    gradients(model, x, y, &plus);
                    w(r, c) = original - step;
                    gradients(model, x, y, &minus);
                    w(r, c) = original;
                    numeric(r, c) = (plus - minus) / (2.0 * step);
                }
            }
            const double denom =
                analytic.weights[std::size_t(l)].norm() + numeric.norm();
            if (denom == 0.0) continue;
            worst = std::max(
                worst, (analytic.weights[std::size_t(l)] - numeric).norm() / denom);
        }
    }
    const bool passed = worst < 1e-4;
    char sci[32];
    std::snprintf(sci, sizeof(sci), "%.2e", worst);
    report(9, passed,
           std::string("analytic gradients match finite differences — worst "
                       "relative error ") +
               sci + " < 1e-4 over 20 model/batch pairs");
    return passed;
}

// --------------------------------------------------------------------------
// 10. Oracle equivalences: the kd-tree path reproduces a plain quadratic
//     scan exactly on 100 random clouds, and Dijkstra all-pairs matches
//     Floyd-Warshall within 1e-12 on graphs with up to 200 nodes.
// --------------------------------------------------------------------------
bool criterion_10() {
    Rng rng(123);
    bool knn_exact = true;
    for (int trial = 0; trial < 100 && knn_exact; ++trial) {
        const int n = 30 + int(rng.bounded(120));
        const int d = 1 + int(rng.bounded(10));
        const int k = 1 + int(rng.bounded(std::uint64_t(std::min(n - 1, 8))));
        PointCloud cloud = generate_hypercube(n, d, rng.next_u64());
        if (trial % 5 == 0)
            for (int i = 0; i + 1 < n; i += 7)
                cloud.points.row(i + 1) = cloud.points.row(i);
        KnnOptions opts;
        opts.method = KnnMethod::kdtree;
        const NeighborTable tree = knn(cloud, k, opts);
        // independent quadratic scan
        for (int i = 0; i < n && knn_exact; ++i) {
            std::vector<std::pair<double, int>> all;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                double d2 = 0.0;
                for (int c = 0; c < cloud.dim(); ++c) {
                    const double diff = cloud.points(i, c) - cloud.points(j, c);
                    d2 += diff * diff;
                }
                all.emplace_back(d2, j);
            }
            std::sort(all.begin(), all.end());
            for (int j = 0; j < k; ++j) {
                if (tree.indices(i, j) != all[std::size_t(j)].second ||
                    tree.distances(i, j) != std::sqrt(all[std::size_t(j)].first))
                    knn_exact = false;
            }
        }
    }

    double worst_geo = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 50 + int(rng.bounded(150));
        const PointCloud cloud = generate_hypercube(n, 2, rng.next_u64());
        const KnnGraph graph = knn_graph(knn(cloud, 3));
        const GeodesicDistances geo = geodesics_all_pairs(graph);
        // Floyd-Warshall oracle
        const double inf = std::numeric_limits<double>::infinity();
        RowMatrix dist = RowMatrix::Constant(n, n, inf);
        for (int v = 0; v < n; ++v) {
            dist(v, v) = 0.0;
            for (int e = graph.offsets[std::size_t(v)];
                 e < graph.offsets[std::size_t(v) + 1]; ++e)
                dist(v, graph.targets[std::size_t(e)]) =
                    std::min(dist(v, graph.targets[std::size_t(e)]),
                             graph.weights[std::size_t(e)]);
        }
        for (int k2 = 0; k2 < n; ++k2)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    dist(i, j) = std::min(dist(i, j), dist(i, k2) + dist(k2, j));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (std::isinf(dist(i, j))) {
                    if (geo.reachable(i, j)) worst_geo = 1.0;
                } else {
                    worst_geo = std::max(
                        worst_geo, std::abs(geo.values(i, j) - dist(i, j)));
                }
            }
    }
    const bool passed = knn_exact && worst_geo < 1e-12;
    report(10, passed,
           std::string("oracle equivalences — kd-tree vs brute force ") +
               (knn_exact ? "exact" : "MISMATCH") +
               " on 100 clouds; geodesics vs Floyd-Warshall worst gap " +
               fmt(worst_geo, 15) + " < 1e-12");
    return passed;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string which = argc > 1 ? argv[1] : "all";
    bool passed = true;
    const bool all = which == "all";
    if (all || which == "1") passed = criterion_1() && passed;
    if (all || which == "2") passed = criterion_2() && passed;
    if (all || which == "3") passed = criterion_3() && passed;
    if (all || which == "4") passed = criterion_4() && passed;
    if (all || which == "5") passed = criterion_5() && passed;
    if (all || which == "6" || which == "7" || which == "8")
        passed = criteria_6_7_8() && passed;
    if (all || which == "9") passed = criterion_9() && passed;
    if (all || which == "10") passed = criterion_10() && passed;
    return passed ? 0 : 1;
}
