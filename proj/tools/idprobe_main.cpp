// idprobe: intrinsic-dimensionality measurement of point clouds and network
// representation manifolds, plus closed-form verification of the noisy-SGD
// compression analysis.

#include "idprobe/generators.hpp"
#include "idprobe/global_id.hpp"
#include "idprobe/io.hpp"
#include "idprobe/local_id.hpp"
#include "idprobe/mlp.hpp"
#include "idprobe/pipeline.hpp"
#include "idprobe/probe.hpp"
#include "idprobe/theory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace idprobe;

std::string fmt(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

PointCloud load_input(const std::string& csv, bool label_column,
                      const std::string& images, const std::string& labels) {
    if (!csv.empty()) return load_csv(csv, label_column);
    if (images.empty())
        throw UsageError("no input: pass --input or --images/--labels");
    PointCloud cloud = load_idx_images(images);
    if (!labels.empty()) cloud.labels = load_idx_labels(labels);
    return cloud;
}

void print_estimate(const IdEstimate& est) {
    std::cout << "method: " << to_string(est.method) << "\n"
              << "dimension: " << fmt(est.dimension) << "\n"
              << "ci95: [" << fmt(est.ci_low) << ", " << fmt(est.ci_high)
              << "]\n"
              << "n_used: " << est.n_used << "\n";
}

// ---------------------------------------------------------------------------
// oracle: closed-form verification suite.
// ---------------------------------------------------------------------------

struct OracleCheck {
    std::string name;
    bool passed;
    std::string detail;
};

TwoLayerProblem random_problem(Rng& rng, int p, int d, int hidden, int c,
                               double sigma) {
    TwoLayerProblem problem;
    problem.X.resize(p, d);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < d; ++j) problem.X(i, j) = rng.gaussian();
    problem.Y = RowMatrix::Zero(p, c);
    for (int i = 0; i < p; ++i) problem.Y(i, int(rng.bounded(std::uint64_t(c)))) = 1.0;
    problem.w2.resize(c, hidden);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < hidden; ++j) problem.w2(i, j) = rng.gaussian();
    problem.sigma = sigma;
    return problem;
}

RowMatrix random_w1(Rng& rng, int hidden, int d) {
    RowMatrix w1(hidden, d);
    for (int i = 0; i < hidden; ++i)
        for (int j = 0; j < d; ++j)
            w1(i, j) = rng.gaussian() / std::sqrt(double(d));
    return w1;
}

std::vector<OracleCheck> run_oracle_suite(std::uint64_t seed, bool quick) {
    std::vector<OracleCheck> checks;
    Rng rng(seed);

    // Monte Carlo mean of the noisy readout loss vs its closed-form
    // expectation, single-output problems where the identity is exact.
    {
        const int instances = quick ? 10 : 20;
        const int trials = quick ? 5000 : 20000;
        int within = 0;
        double worst = 0.0;
        for (int i = 0; i < instances; ++i) {
            TwoLayerProblem problem =
                random_problem(rng, 3 + int(rng.bounded(6)), 2 + int(rng.bounded(5)),
                               2 + int(rng.bounded(5)), 1,
                               0.05 + 0.4 * rng.uniform());
            const RowMatrix w1 =
                random_w1(rng, problem.hidden_dim(), problem.input_dim());
            const double expected = effective_loss(problem, w1);
            const MonteCarloLoss mc =
                noisy_loss_mc(problem, w1, trials, rng.next_u64());
            const double gap = std::abs(mc.mean - expected);
            if (gap < 3.0 * mc.std_error) ++within;
            worst = std::max(worst, mc.std_error > 0 ? gap / mc.std_error : 0.0);
        }
        OracleCheck check;
        check.name = "noisy-loss expectation (MC vs closed form)";
        check.passed = within >= instances - 1;
        check.detail = std::to_string(within) + "/" + std::to_string(instances) +
                       " within 3 standard errors (worst " + fmt(worst) + " SE)";
        checks.push_back(check);
    }

    // Closed-form W1 minimizes the effective loss.
    {
        TwoLayerProblem problem = random_problem(rng, 8, 6, 5, 1, 0.3);
        const RowMatrix w1_hat = closed_form_w1(problem);
        const double base = effective_loss(problem, w1_hat);
        bool minimal = true;
        double margin = std::numeric_limits<double>::infinity();
        for (int trial = 0; trial < 100; ++trial) {
            RowMatrix delta = 0.1 * random_w1(rng, problem.hidden_dim(),
                                              problem.input_dim());
            const double perturbed = effective_loss(problem, w1_hat + delta);
            margin = std::min(margin, perturbed - base);
            if (perturbed < base) minimal = false;
        }
        OracleCheck check;
        check.name = "closed-form W1 minimality (100 perturbations)";
        check.passed = minimal;
        check.detail = "smallest loss increase " + fmt(margin) + " (tolerance >= 0)";
        checks.push_back(check);
    }

    // Optimal hidden vectors have no component orthogonal to the readout.
    {
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            TwoLayerProblem problem =
                random_problem(rng, 4, 4, 3 + int(rng.bounded(5)),
                               1 + int(rng.bounded(3)), 0.1 + rng.uniform());
            Eigen::VectorXd y(problem.classes());
            for (int i = 0; i < problem.classes(); ++i) y(i) = rng.gaussian();
            const Eigen::VectorXd h_star = optimal_hidden(problem, y);
            worst = std::max(worst,
                             orthogonal_component(h_star, problem.w2).norm());
        }
        OracleCheck check;
        check.name = "optimal hidden has null orthogonal component";
        check.passed = worst < 1e-10;
        check.detail = "worst orthogonal norm " + fmt(worst) + " (tolerance 1e-10)";
        checks.push_back(check);
    }

    // SGD on the noisy readout loss converges to the closed form, and the
    // noise is what removes the task-irrelevant directions. The noisy run
    // starts near zero (input directions outside the sample row space get
    // no gradient, so large init junk there would never decay); the
    // noise-free contrast starts from a unit random init to show that
    // plain gradient descent leaves the task-irrelevant components behind.
    {
        TwoLayerProblem problem = random_problem(rng, 15, 20, 10, 3, 0.05);
        const RowMatrix w1_hat = closed_form_w1(problem);
        NoisySgdConfig sgd;
        sgd.steps = quick ? 30000 : 80000;
        sgd.learning_rate_start = 3e-4;
        sgd.init_scale = 0.01;
        sgd.seed = rng.next_u64();
        const RowMatrix w1_sgd = fit_w1_sgd(problem, sgd);
        const double rel = (w1_sgd - w1_hat).norm() / w1_hat.norm();

        const RowMatrix h = problem.X * w1_sgd.transpose();
        double worst_ratio = 0.0;
        for (int mu = 0; mu < problem.samples(); ++mu) {
            const Eigen::VectorXd h_mu = h.row(mu).transpose();
            if (h_mu.norm() == 0.0) continue;
            worst_ratio = std::max(worst_ratio,
                                   orthogonal_component(h_mu, problem.w2).norm() /
                                       h_mu.norm());
        }

        TwoLayerProblem noiseless = problem;
        noiseless.sigma = 0.0;
        NoisySgdConfig plain = sgd;
        plain.init_scale = 1.0;
        plain.seed = rng.next_u64();
        const RowMatrix w1_plain = fit_w1_sgd(noiseless, plain);
        const RowMatrix h0 = problem.X * w1_plain.transpose();
        double plain_ratio = 0.0;
        for (int mu = 0; mu < problem.samples(); ++mu) {
            const Eigen::VectorXd h_mu = h0.row(mu).transpose();
            if (h_mu.norm() == 0.0) continue;
            plain_ratio = std::max(plain_ratio,
                                   orthogonal_component(h_mu, problem.w2).norm() /
                                       h_mu.norm());
        }

        OracleCheck check;
        check.name = "noisy SGD reaches closed-form W1";
        check.passed = rel < 0.05 && worst_ratio < 0.05 && plain_ratio > 0.2;
        check.detail = "relative distance " + fmt(rel) +
                       " (tolerance 0.05), orthogonal ratio " + fmt(worst_ratio) +
                       " (tolerance 0.05), noiseless ratio " + fmt(plain_ratio) +
                       " (must exceed 0.2)";
        checks.push_back(check);
    }

    // Strict convexity of the effective loss in the hidden vectors.
    {
        TwoLayerProblem problem = random_problem(rng, 1, 2, 6, 2, 0.4);
        bool convex = true;
        double margin = std::numeric_limits<double>::infinity();
        for (int trial = 0; trial < 50; ++trial) {
            RowMatrix h1(1, problem.hidden_dim()), h2(1, problem.hidden_dim());
            for (int j = 0; j < problem.hidden_dim(); ++j) {
                h1(0, j) = rng.gaussian();
                h2(0, j) = rng.gaussian();
            }
            if ((h1 - h2).norm() < 1e-9) continue;
            const RowMatrix mid = 0.5 * (h1 + h2);
            const double lhs = effective_loss(problem, RowMatrix(), mid);
            const double rhs = 0.5 * effective_loss(problem, RowMatrix(), h1) +
                               0.5 * effective_loss(problem, RowMatrix(), h2);
            margin = std::min(margin, rhs - lhs);
            if (lhs >= rhs) convex = false;
        }
        OracleCheck check;
        check.name = "effective loss strictly convex in hidden activity";
        check.passed = convex;
        check.detail = "smallest midpoint gap " + fmt(margin) + " (must be > 0)";
        checks.push_back(check);
    }

    return checks;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"intrinsic dimensionality probe"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset to CSV");
    std::string gen_kind = "hypercube";
    int gen_n = 1000, gen_dim = 2;
    double gen_thickness = 0.0;
    std::uint64_t gen_seed = 0;
    ClassManifoldParams gen_classes;
    std::string gen_out;
    gen->add_option("--kind", gen_kind, "hypercube|hypersphere|swissroll|classes")
        ->check(CLI::IsMember({"hypercube", "hypersphere", "swissroll", "classes"}));
    gen->add_option("--n", gen_n, "number of points");
    gen->add_option("--dim", gen_dim, "cube dimension / sphere dimension");
    gen->add_option("--thickness", gen_thickness, "swiss roll slab thickness");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--n-per-class", gen_classes.n_per_class, "classes kind: points per class");
    gen->add_option("--classes", gen_classes.n_classes, "classes kind: class count");
    gen->add_option("--latent-dim", gen_classes.latent_dim, "classes kind: patch dimension");
    gen->add_option("--ambient-dim", gen_classes.ambient_dim, "classes kind: embedding dimension");
    gen->add_option("-o,--output", gen_out, "output CSV path")->required();

    // estimate
    auto* est = app.add_subcommand("estimate", "estimate intrinsic dimensionality of a point cloud");
    std::string est_input, est_images, est_labels, est_method = "local";
    bool est_label_column = false, est_per_class = false;
    int est_k = 20, est_dmin = 1, est_dmax = 50, est_ref_samples = 10000;
    std::uint64_t est_ref_seed = 0;
    double est_discard = 0.1;
    std::string est_metric = "arc";
    std::string est_alignment = "fitted";
    est->add_option("--input", est_input, "CSV input path");
    est->add_flag("--label-column", est_label_column, "last CSV column is a class label");
    est->add_option("--images", est_images, "IDX image file");
    est->add_option("--labels", est_labels, "IDX label file");
    est->add_option("--method", est_method, "local|global")
        ->check(CLI::IsMember({"local", "global"}));
    est->add_option("--k", est_k, "neighbors for the global graph");
    est->add_option("--discard-fraction", est_discard, "local: top ratio tail to drop");
    est->add_option("--d-min", est_dmin, "global: smallest candidate dimension");
    est->add_option("--d-max", est_dmax, "global: largest candidate dimension");
    est->add_option("--ref-samples", est_ref_samples, "global: reference sample count");
    est->add_option("--ref-seed", est_ref_seed, "global: reference seed");
    est->add_option("--ref-metric", est_metric, "global: arc|chord reference distances")
        ->check(CLI::IsMember({"arc", "chord"}));
    est->add_option("--ref-alignment", est_alignment,
                    "global: fitted|mode|median reference alignment")
        ->check(CLI::IsMember({"fitted", "mode", "median"}));
    est->add_flag("--per-class", est_per_class, "estimate each class separately and average");

    // train
    auto* tr = app.add_subcommand("train", "train a dense network and write a checkpoint");
    std::string tr_data, tr_images, tr_labels, tr_hidden = "200", tr_activation = "relu";
    std::string tr_init = "gaussian", tr_checkpoint, tr_loss_csv;
    bool tr_label_column = true, tr_bias = false;
    TrainConfig tr_config;
    tr->add_option("--data", tr_data, "CSV input (labels in last column)");
    tr->add_flag("--label-column,!--no-label-column", tr_label_column,
                 "last CSV column is a class label");
    tr->add_option("--images", tr_images, "IDX image file");
    tr->add_option("--labels", tr_labels, "IDX label file");
    tr->add_option("--hidden", tr_hidden, "comma-separated hidden widths");
    tr->add_option("--activation", tr_activation, "linear|relu")
        ->check(CLI::IsMember({"linear", "relu"}));
    tr->add_option("--init", tr_init, "gaussian|identity")
        ->check(CLI::IsMember({"gaussian", "identity"}));
    tr->add_flag("--bias", tr_bias, "enable bias terms");
    tr->add_option("--epochs", tr_config.epochs, "training epochs");
    tr->add_option("--batch", tr_config.batch_size, "mini-batch size");
    tr->add_option("--lr", tr_config.learning_rate_start, "starting learning rate");
    tr->add_option("--lr-decay", tr_config.learning_rate_decay_per_epoch,
                   "learning rate decrease per epoch");
    tr->add_option("--sigma", tr_config.weight_noise_sigma,
                   "weight-noise standard deviation");
    tr->add_option("--seed", tr_config.seed, "training seed");
    tr->add_option("--checkpoint", tr_checkpoint, "output checkpoint path")->required();
    tr->add_option("--loss-csv", tr_loss_csv, "per-epoch loss trace CSV");

    // probe
    auto* pr = app.add_subcommand("probe", "per-layer per-class dimensionality of a checkpoint");
    std::string pr_checkpoint, pr_data, pr_images, pr_labels, pr_layers = "all";
    std::string pr_methods = "local", pr_out, pr_csv;
    bool pr_label_column = true, pr_include_pre = false;
    int pr_subsample = 1000, pr_k = 20, pr_dmax = 50;
    double pr_discard = 0.1;
    std::uint64_t pr_seed = 0;
    pr->add_option("--checkpoint", pr_checkpoint, "model checkpoint")->required();
    pr->add_option("--data", pr_data, "CSV input (labels in last column)");
    pr->add_flag("--label-column,!--no-label-column", pr_label_column,
                 "last CSV column is a class label");
    pr->add_option("--images", pr_images, "IDX image file");
    pr->add_option("--labels", pr_labels, "IDX label file");
    pr->add_option("--layers", pr_layers, "comma-separated layer indices or 'all'");
    pr->add_option("--methods", pr_methods, "comma-separated: local,global");
    pr->add_option("--subsample", pr_subsample, "points per class");
    pr->add_option("--seed", pr_seed, "subsample seed");
    pr->add_option("--discard-fraction", pr_discard, "local estimator tail discard");
    pr->add_option("--k", pr_k, "global estimator graph degree");
    pr->add_option("--d-max", pr_dmax, "global estimator candidate ceiling");
    pr->add_flag("--include-pre", pr_include_pre, "also probe pre-activations");
    pr->add_option("--out", pr_out, "report JSON path")->required();
    pr->add_option("--csv", pr_csv, "flat entries CSV path");

    // run
    auto* rn = app.add_subcommand("run", "full pipeline from a JSON config");
    std::string rn_config;
    rn->add_option("--config", rn_config, "run configuration JSON")->required();

    // oracle
    auto* orc = app.add_subcommand("oracle", "verify the noisy-SGD closed-form analysis");
    std::uint64_t orc_seed = 7;
    bool orc_quick = false;
    orc->add_option("--seed", orc_seed, "suite seed");
    orc->add_flag("--quick", orc_quick, "smaller trial counts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 1;
    }

    try {
        using namespace idprobe;
        if (gen->parsed()) {
            PointCloud cloud;
            if (gen_kind == "hypercube")
                cloud = generate_hypercube(gen_n, gen_dim, gen_seed);
            else if (gen_kind == "hypersphere")
                cloud = generate_hypersphere(gen_n, gen_dim, gen_seed);
            else if (gen_kind == "swissroll")
                cloud = generate_swiss_roll(gen_n, gen_thickness, gen_seed);
            else
                cloud = generate_class_manifolds(gen_classes, gen_seed);
            save_csv(cloud, gen_out);
            std::cout << "wrote " << cloud.size() << " points ("
                      << cloud.dim() << " coordinates) to " << gen_out << "\n";
        } else if (est->parsed()) {
            const PointCloud cloud =
                load_input(est_input, est_label_column, est_images, est_labels);
            const auto estimate_one = [&](const PointCloud& c) {
                if (est_method == "local") {
                    LocalIdOptions opts;
                    opts.discard_fraction = est_discard;
                    return estimate_local_id(c, opts);
                }
                GlobalIdOptions opts;
                opts.k = est_k;
                opts.d_min = est_dmin;
                opts.d_max = est_dmax;
                opts.ref_samples = est_ref_samples;
                opts.ref_seed = est_ref_seed;
                opts.metric = est_metric == "arc" ? ReferenceMetric::arc
                                                  : ReferenceMetric::chord;
                if (est_alignment == "mode") opts.alignment = ReferenceAlignment::mode;
                else if (est_alignment == "median") opts.alignment = ReferenceAlignment::median;
                return estimate_global_id(c, opts);
            };
            if (est_per_class && cloud.labels) {
                double sum = 0.0;
                int count = 0;
                for (const PointCloud& class_cloud : split_by_class(cloud)) {
                    const IdEstimate e = estimate_one(class_cloud);
                    std::cout << "class "
                              << (*class_cloud.labels)[0] << ": "
                              << fmt(e.dimension) << " [" << fmt(e.ci_low)
                              << ", " << fmt(e.ci_high) << "]\n";
                    sum += e.dimension;
                    ++count;
                }
                std::cout << "class-averaged dimension: " << fmt(sum / count)
                          << "\n";
            } else {
                print_estimate(estimate_one(cloud));
            }
        } else if (tr->parsed()) {
            PointCloud cloud =
                load_input(tr_data, tr_label_column, tr_images, tr_labels);
            if (!cloud.labels)
                throw UsageError("train: dataset has no labels");
            const LabeledDataset dataset = make_dataset(std::move(cloud));
            tr_config.init = tr_init == "identity" ? InitKind::identity_hidden
                                                   : InitKind::gaussian;
            tr_config.bias = tr_bias;
            std::vector<int> widths;
            widths.push_back(dataset.inputs.dim());
            for (const int w : parse_int_list(tr_hidden)) widths.push_back(w);
            widths.push_back(dataset.classes());
            std::vector<Activation> acts(widths.size() - 1,
                                         activation_from_string(tr_activation));
            acts.back() = Activation::linear;
            Rng rng(tr_config.seed);
            MlpModel model = make_mlp(widths, acts, tr_config, rng);
            const double initial = mse_loss(model, dataset);
            TrainResult result = train(std::move(model), dataset, tr_config);
            save_model(result.model, tr_checkpoint);
            if (!tr_loss_csv.empty()) {
                std::ofstream out(tr_loss_csv);
                if (!out)
                    throw DataFormatError("train: cannot write " + tr_loss_csv);
                out << "epoch,loss\n0," << fmt(initial) << "\n";
                for (std::size_t e = 0; e < result.loss_trace.size(); ++e)
                    out << (e + 1) << ',' << fmt(result.loss_trace[e]) << "\n";
            }
            std::cout << "initial loss: " << fmt(initial) << "\n";
            if (!result.loss_trace.empty())
                std::cout << "final loss: " << fmt(result.loss_trace.back())
                          << "\n";
            std::cout << "checkpoint: " << tr_checkpoint << "\n";
        } else if (pr->parsed()) {
            const MlpModel model = load_model(pr_checkpoint);
            PointCloud cloud =
                load_input(pr_data, pr_label_column, pr_images, pr_labels);
            if (!cloud.labels)
                cloud.labels = std::vector<int>(std::size_t(cloud.size()), 0);
            std::vector<int> layers;
            if (pr_layers == "all")
                for (int l = 0; l <= model.depth(); ++l) layers.push_back(l);
            else
                layers = parse_int_list(pr_layers);
            ProbeOptions opts;
            opts.methods.clear();
            {
                std::stringstream ss(pr_methods);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    if (item == "local") opts.methods.push_back(IdMethod::local);
                    else if (item == "global") opts.methods.push_back(IdMethod::global);
                    else throw UsageError("probe: unknown method '" + item + "'");
                }
            }
            opts.subsample = pr_subsample;
            opts.seed = pr_seed;
            opts.include_pre_activation = pr_include_pre;
            opts.local.discard_fraction = pr_discard;
            opts.global.k = pr_k;
            opts.global.d_max = pr_dmax;
            const ProbeReport report = probe_layers(model, cloud, layers, opts);
            nlohmann::ordered_json doc;
            doc["format"] = "idprobe-report";
            doc["version"] = 1;
            doc["timestamp"] = detail::iso_timestamp();
            doc["report"] = detail::report_to_json(report);
            std::ofstream out(pr_out);
            if (!out) throw DataFormatError("probe: cannot write " + pr_out);
            out << doc.dump(1) << '\n';
            if (!pr_csv.empty()) {
                std::ofstream csv(pr_csv);
                if (!csv) throw DataFormatError("probe: cannot write " + pr_csv);
                csv << "phase,layer_index,layer_name,layer_width,representation,"
                       "class_id,method,status,dimension,ci_low,ci_high,n_used\n";
                detail::write_entries_csv(csv, "after", report);
            }
            for (const LayerSummary& s : report.summaries)
                if (s.n_classes > 0)
                    std::cout << s.layer_name << " (" << to_string(s.method)
                              << ", " << to_string(s.representation)
                              << "): " << fmt(s.mean_dimension) << " ["
                              << fmt(s.ci_low) << ", " << fmt(s.ci_high)
                              << "]\n";
        } else if (rn->parsed()) {
            const RunConfig config = load_run_config(rn_config);
            const RunArtifacts artifacts = run_pipeline(config);
            std::cout << "report: " << artifacts.report_json << "\n"
                      << "entries: " << artifacts.entries_csv << "\n"
                      << "layers: " << artifacts.summary_csv << "\n";
        } else if (orc->parsed()) {
            const std::vector<OracleCheck> checks =
                run_oracle_suite(orc_seed, orc_quick);
            bool all_passed = true;
            for (const OracleCheck& check : checks) {
                std::cout << (check.passed ? "[PASS] " : "[FAIL] ") << check.name
                          << ": " << check.detail << "\n";
                all_passed = all_passed && check.passed;
            }
            if (!all_passed)
                throw NumericalError("oracle: verification suite failed");
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
