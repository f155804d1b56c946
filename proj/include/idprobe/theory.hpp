#pragma once

#include "idprobe/common.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace idprobe {

/// Two-layer linear-readout setting: P samples of dimension d, c-class
/// one-hot targets, fixed readout w2 (c x H), and readout-noise level sigma.
struct TwoLayerProblem {
    RowMatrix X;   // P x d
    RowMatrix Y;   // P x c
    RowMatrix w2;  // c x H
    double sigma = 0.0;

    int samples() const { return int(X.rows()); }
    int input_dim() const { return int(X.cols()); }
    int classes() const { return int(Y.cols()); }
    int hidden_dim() const { return int(w2.cols()); }

    void validate() const {
        if (Y.rows() != X.rows())
            throw UsageError("two-layer problem: X and Y row counts differ");
        if (w2.rows() != Y.cols())
            throw UsageError("two-layer problem: w2 rows must match classes");
        if (sigma < 0.0)
            throw UsageError("two-layer problem: sigma must be >= 0");
    }
};

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// 1e-12 * (largest singular value) are truncated.
inline RowMatrix pseudo_inverse(const RowMatrix& matrix) {
    using Eigen::ComputeThinU;
    using Eigen::ComputeThinV;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(matrix, ComputeThinU | ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? 1e-12 * sv(0) : 0.0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Orthonormal basis of the row space of w2 (columns, H x rank).
inline RowMatrix row_space_basis(const RowMatrix& w2) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w2, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? 1e-12 * sv(0) : 0.0;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) ++rank;
    return svd.matrixV().leftCols(rank);
}

/// Component of h orthogonal to the row space of the readout weights — the
/// task-irrelevant part of a hidden representation.
inline Eigen::VectorXd orthogonal_component(const Eigen::VectorXd& h,
                                            const RowMatrix& w2) {
    if (h.size() != w2.cols())
        throw UsageError("orthogonal_component: h length must match w2 columns");
    const RowMatrix basis = row_space_basis(w2);
    return h - basis * (basis.transpose() * h);
}

/// Expected loss under readout noise: the noise-free summed squared error
/// plus sigma^2 * Tr(C), with C_jj' = sum_mu h_j h_j'. Hidden vectors are
/// W1 x (linear activation) unless supplied.
inline double effective_loss(const TwoLayerProblem& problem, const RowMatrix& w1,
                             const std::optional<RowMatrix>& hidden = std::nullopt) {
    problem.validate();
    RowMatrix h;  // P x H
    if (hidden) {
        if (hidden->rows() != problem.X.rows() ||
            hidden->cols() != problem.w2.cols())
            throw UsageError("effective_loss: hidden matrix shape mismatch");
        h = *hidden;
    } else {
        if (w1.rows() != problem.w2.cols() || w1.cols() != problem.X.cols())
            throw UsageError("effective_loss: W1 must be H x d");
        h = problem.X * w1.transpose();
    }
    const double task = (problem.Y - h * problem.w2.transpose()).squaredNorm();
    const double trace_c = h.squaredNorm();
    return task + problem.sigma * problem.sigma * trace_c;
}

struct MonteCarloLoss {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo evaluation of the per-sample readout-noise loss
///   sum_mu sum_i ( y_i - sum_j (w2_ij + sigma xi^mu_ij) h_j )^2
/// with xi drawn i.i.d. unit Gaussian per trial and sample. Trials run on
/// independent RNG streams derived from the seed, so results do not depend
/// on the thread count.
inline MonteCarloLoss noisy_loss_mc(const TwoLayerProblem& problem,
                                    const RowMatrix& w1, int trials,
                                    std::uint64_t seed, int n_threads = 0) {
    problem.validate();
    if (trials < 1) throw UsageError("noisy_loss_mc: trials must be >= 1");
    if (w1.rows() != problem.w2.cols() || w1.cols() != problem.X.cols())
        throw UsageError("noisy_loss_mc: W1 must be H x d");
    const RowMatrix h = problem.X * w1.transpose();  // P x H
    const int p = problem.samples();
    const int c = problem.classes();
    const int hidden = problem.hidden_dim();
    const double sigma = problem.sigma;
    if (n_threads <= 0) n_threads = default_thread_count();

    if (sigma == 0.0) {
        // noise-free: every trial evaluates the same deterministic loss
        MonteCarloLoss result;
        result.mean = (problem.Y - h * problem.w2.transpose()).squaredNorm();
        result.std_error = 0.0;
        return result;
    }

    const Rng root(seed);
    std::vector<double> per_trial(std::size_t(trials), 0.0);
    parallel_for(trials, n_threads, [&](std::int64_t trial) {
        Rng rng = root.spawn(std::uint64_t(trial));
        double loss = 0.0;
        for (int mu = 0; mu < p; ++mu) {
            for (int i = 0; i < c; ++i) {
                double y_hat = 0.0;
                for (int j = 0; j < hidden; ++j)
                    y_hat += (problem.w2(i, j) + sigma * rng.gaussian()) * h(mu, j);
                const double residual = problem.Y(mu, i) - y_hat;
                loss += residual * residual;
            }
        }
        per_trial[std::size_t(trial)] = loss;
    });

    MonteCarloLoss result;
    double sum = 0.0;
    for (const double v : per_trial) sum += v;
    result.mean = sum / double(trials);
    if (trials > 1) {
        double ss = 0.0;
        for (const double v : per_trial) {
            const double dev = v - result.mean;
            ss += dev * dev;
        }
        result.std_error = std::sqrt(ss / double(trials - 1)) / std::sqrt(double(trials));
    }
    return result;
}

/// Closed-form minimizer of the effective loss for the linear network:
///   W1_hat = (w2^T w2 + sigma^2 I)^+ w2^T Y^T X (X^T X)^+.
/// With sigma = 0 this is the pseudo-inverse limit.
inline RowMatrix closed_form_w1(const TwoLayerProblem& problem) {
    problem.validate();
    const int hidden = problem.hidden_dim();
    RowMatrix gram = problem.w2.transpose() * problem.w2;
    gram += problem.sigma * problem.sigma *
            RowMatrix::Identity(hidden, hidden);
    const RowMatrix left = pseudo_inverse(gram) * problem.w2.transpose();
    const RowMatrix xtx_pinv = pseudo_inverse(problem.X.transpose() * problem.X);
    return left * problem.Y.transpose() * problem.X * xtx_pinv;
}

/// Minimizer of ||y - w2 h||^2 + sigma^2 ||h||^2 over unconstrained h:
///   h* = (w2^T w2 + sigma^2 I)^+ w2^T y.
/// Its component orthogonal to the row space of w2 is zero.
inline Eigen::VectorXd optimal_hidden(const TwoLayerProblem& problem,
                                      const Eigen::VectorXd& y) {
    problem.validate();
    if (y.size() != problem.w2.rows())
        throw UsageError("optimal_hidden: y length must match classes");
    const int hidden = problem.hidden_dim();
    RowMatrix gram = problem.w2.transpose() * problem.w2;
    gram += problem.sigma * problem.sigma *
            RowMatrix::Identity(hidden, hidden);
    return pseudo_inverse(gram) * (problem.w2.transpose() * y);
}

// ---------------------------------------------------------------------------
// SGD on the noisy readout loss, used to verify that stochastic training
// reaches the closed-form minimizer.
// ---------------------------------------------------------------------------

struct NoisySgdConfig {
    int steps = 40000;
    double learning_rate_start = 2e-3;
    double learning_rate_end = 0.0;  // linear decay over the run
    std::uint64_t seed = 0;
    double init_scale = 1.0;         // N(0, scale/sqrt(d)) entries
    double tail_average_fraction = 0.2;
};

/// Full-batch SGD on the readout-noise loss: each step draws a fresh noise
/// matrix per sample, computes the exact gradient of that draw with respect
/// to W1, and applies it with a linearly decaying learning rate. Returns the
/// tail-averaged iterate. With sigma = 0 this is plain gradient descent.
inline RowMatrix fit_w1_sgd(const TwoLayerProblem& problem,
                            const NoisySgdConfig& config = {}) {
    problem.validate();
    if (config.steps < 1) throw UsageError("fit_w1_sgd: steps must be >= 1");
    const int p = problem.samples();
    const int c = problem.classes();
    const int hidden = problem.hidden_dim();
    const int d = problem.input_dim();
    Rng rng(config.seed);
    RowMatrix w1(hidden, d);
    for (int i = 0; i < hidden; ++i)
        for (int j = 0; j < d; ++j)
            w1(i, j) = config.init_scale * rng.gaussian() / std::sqrt(double(d));

    RowMatrix noisy_w2(c, hidden);
    RowMatrix tail_sum = RowMatrix::Zero(hidden, d);
    const int tail_start =
        config.steps - std::max(1, int(config.tail_average_fraction * config.steps));
    for (int step = 0; step < config.steps; ++step) {
        const double frac = config.steps > 1 ? double(step) / double(config.steps - 1) : 0.0;
        const double eta = config.learning_rate_start +
                           frac * (config.learning_rate_end - config.learning_rate_start);
        const RowMatrix h = problem.X * w1.transpose();  // P x H
        RowMatrix grad_h(p, hidden);
        for (int mu = 0; mu < p; ++mu) {
            for (int i = 0; i < c; ++i)
                for (int j = 0; j < hidden; ++j)
                    noisy_w2(i, j) = problem.w2(i, j) +
                                     problem.sigma * rng.gaussian();
            const Eigen::VectorXd residual =
                problem.Y.row(mu).transpose() -
                noisy_w2 * h.row(mu).transpose();
            grad_h.row(mu) = (-2.0 * (noisy_w2.transpose() * residual)).transpose();
        }
        w1.noalias() -= eta * (grad_h.transpose() * problem.X);
        if (step >= tail_start) tail_sum += w1;
    }
    return tail_sum / double(config.steps - tail_start);
}

}  // namespace idprobe
