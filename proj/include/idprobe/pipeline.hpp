#pragma once

#include "idprobe/common.hpp"
#include "idprobe/generators.hpp"
#include "idprobe/io.hpp"
#include "idprobe/mlp.hpp"
#include "idprobe/point_cloud.hpp"
#include "idprobe/probe.hpp"

#include <json.hpp>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace idprobe {

// ---------------------------------------------------------------------------
// Run configuration. The JSON document is schema-checked up front: unknown
// keys anywhere are rejected before any compute starts.
// ---------------------------------------------------------------------------

struct DatasetConfig {
    std::string kind;  // hypercube | hypersphere | swissroll | classes | csv | idx
    int n = 1000;
    int dim = 2;
    double thickness = 0.0;
    std::uint64_t seed = 0;
    ClassManifoldParams class_params;
    std::string path;        // csv
    bool label_column = false;
    std::string images;      // idx
    std::string labels;      // idx
};

struct ModelConfig {
    std::vector<int> hidden_widths;
    Activation activation = Activation::relu;
    InitKind init = InitKind::gaussian;
    double init_scale = 1.0;
    bool bias = false;
    std::uint64_t seed = 0;
};

struct ProbeConfig {
    std::vector<int> layers;  // empty = all (0..depth)
    std::vector<IdMethod> methods = {IdMethod::local};
    int subsample = 1000;
    std::uint64_t seed = 0;
    double discard_fraction = 0.1;
    int k = 20;
    int d_min = 1;
    int d_max = 50;
    bool include_pre_activation = false;
};

struct RunConfig {
    DatasetConfig dataset;
    std::optional<ModelConfig> model;
    std::optional<TrainConfig> train;
    ProbeConfig probe;
    std::string output_dir = ".";
    std::string output_prefix = "run";
    int n_threads = 0;

    nlohmann::ordered_json echo;  // the validated document, for the report
};

namespace detail {

inline void check_keys(const nlohmann::json& obj,
                       const std::set<std::string>& allowed,
                       const std::string& context) {
    if (!obj.is_object())
        throw DataFormatError("config: " + context + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (allowed.find(key) == allowed.end())
            throw DataFormatError("config: unknown key '" + key + "' in " +
                                  context);
    }
}

template <typename T>
T get_or(const nlohmann::json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw DataFormatError("config: bad value for '" + key + "'");
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& doc) {
    detail::check_keys(doc, {"dataset", "model", "train", "probe", "output",
                             "threads"},
                       "top level");
    if (!doc.contains("dataset") || !doc.contains("probe") ||
        !doc.contains("output"))
        throw DataFormatError("config: 'dataset', 'probe' and 'output' are required");

    RunConfig config;
    config.n_threads = detail::get_or(doc, "threads", 0);

    const auto& ds = doc.at("dataset");
    detail::check_keys(ds,
                       {"kind", "n", "dim", "thickness", "seed", "n_per_class",
                        "classes", "latent_dim", "ambient_dim", "path",
                        "label_column", "images", "labels"},
                       "dataset");
    config.dataset.kind = detail::get_or<std::string>(ds, "kind", "");
    config.dataset.n = detail::get_or(ds, "n", 1000);
    config.dataset.dim = detail::get_or(ds, "dim", 2);
    config.dataset.thickness = detail::get_or(ds, "thickness", 0.0);
    config.dataset.seed = detail::get_or<std::uint64_t>(ds, "seed", 0);
    config.dataset.class_params.n_per_class =
        detail::get_or(ds, "n_per_class", 1000);
    config.dataset.class_params.n_classes = detail::get_or(ds, "classes", 10);
    config.dataset.class_params.latent_dim = detail::get_or(ds, "latent_dim", 8);
    config.dataset.class_params.ambient_dim =
        detail::get_or(ds, "ambient_dim", 100);
    config.dataset.path = detail::get_or<std::string>(ds, "path", "");
    config.dataset.label_column = detail::get_or(ds, "label_column", false);
    config.dataset.images = detail::get_or<std::string>(ds, "images", "");
    config.dataset.labels = detail::get_or<std::string>(ds, "labels", "");
    static const std::set<std::string> kinds = {
        "hypercube", "hypersphere", "swissroll", "classes", "csv", "idx"};
    if (kinds.find(config.dataset.kind) == kinds.end())
        throw DataFormatError("config: unknown dataset kind '" +
                              config.dataset.kind + "'");

    if (doc.contains("model")) {
        const auto& m = doc.at("model");
        detail::check_keys(m,
                           {"hidden_widths", "activation", "init", "init_scale",
                            "bias", "seed"},
                           "model");
        ModelConfig model;
        model.hidden_widths =
            detail::get_or<std::vector<int>>(m, "hidden_widths", {});
        model.activation = activation_from_string(
            detail::get_or<std::string>(m, "activation", "relu"));
        const std::string init = detail::get_or<std::string>(m, "init", "gaussian");
        if (init == "gaussian") model.init = InitKind::gaussian;
        else if (init == "identity") model.init = InitKind::identity_hidden;
        else throw DataFormatError("config: unknown init '" + init + "'");
        model.init_scale = detail::get_or(m, "init_scale", 1.0);
        model.bias = detail::get_or(m, "bias", false);
        model.seed = detail::get_or<std::uint64_t>(m, "seed", 0);
        config.model = model;
    }

    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        detail::check_keys(t,
                           {"epochs", "batch_size", "learning_rate", "lr_decay",
                            "weight_noise_sigma", "seed"},
                           "train");
        if (!config.model)
            throw DataFormatError("config: 'train' requires a 'model' section");
        TrainConfig train;
        train.epochs = detail::get_or(t, "epochs", 30);
        train.batch_size = detail::get_or(t, "batch_size", 64);
        train.learning_rate_start = detail::get_or(t, "learning_rate", 0.01);
        train.learning_rate_decay_per_epoch = detail::get_or(t, "lr_decay", 0.0001);
        train.weight_noise_sigma = detail::get_or(t, "weight_noise_sigma", 0.0);
        train.seed = detail::get_or<std::uint64_t>(t, "seed", 0);
        train.init = config.model->init;
        train.init_scale = config.model->init_scale;
        train.bias = config.model->bias;
        config.train = train;
    }

    const auto& p = doc.at("probe");
    detail::check_keys(p,
                       {"layers", "methods", "subsample", "seed",
                        "discard_fraction", "k", "d_min", "d_max",
                        "include_pre_activation"},
                       "probe");
    if (p.contains("layers") && !p.at("layers").is_string())
        config.probe.layers = detail::get_or<std::vector<int>>(p, "layers", {});
    else if (p.contains("layers") &&
             p.at("layers").get<std::string>() != "all")
        throw DataFormatError("config: probe.layers must be a list or \"all\"");
    config.probe.methods.clear();
    for (const std::string& name :
         detail::get_or<std::vector<std::string>>(p, "methods", {"local"})) {
        if (name == "local") config.probe.methods.push_back(IdMethod::local);
        else if (name == "global") config.probe.methods.push_back(IdMethod::global);
        else throw DataFormatError("config: unknown method '" + name + "'");
    }
    config.probe.subsample = detail::get_or(p, "subsample", 1000);
    config.probe.seed = detail::get_or<std::uint64_t>(p, "seed", 0);
    config.probe.discard_fraction = detail::get_or(p, "discard_fraction", 0.1);
    config.probe.k = detail::get_or(p, "k", 20);
    config.probe.d_min = detail::get_or(p, "d_min", 1);
    config.probe.d_max = detail::get_or(p, "d_max", 50);
    config.probe.include_pre_activation =
        detail::get_or(p, "include_pre_activation", false);

    const auto& out = doc.at("output");
    detail::check_keys(out, {"dir", "prefix"}, "output");
    config.output_dir = detail::get_or<std::string>(out, "dir", ".");
    config.output_prefix = detail::get_or<std::string>(out, "prefix", "run");

    config.echo = nlohmann::ordered_json(doc);
    return config;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("config: cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError("config: invalid JSON in " + path + ": " + e.what());
    }
    return parse_run_config(doc);
}

// ---------------------------------------------------------------------------
// Dataset loading.
// ---------------------------------------------------------------------------

inline PointCloud load_dataset(const DatasetConfig& config) {
    PointCloud cloud;
    if (config.kind == "hypercube") {
        cloud = generate_hypercube(config.n, config.dim, config.seed);
    } else if (config.kind == "hypersphere") {
        cloud = generate_hypersphere(config.n, config.dim, config.seed);
    } else if (config.kind == "swissroll") {
        cloud = generate_swiss_roll(config.n, config.thickness, config.seed);
    } else if (config.kind == "classes") {
        cloud = generate_class_manifolds(config.class_params, config.seed);
    } else if (config.kind == "csv") {
        cloud = load_csv(config.path, config.label_column);
    } else if (config.kind == "idx") {
        cloud = load_idx_images(config.images);
        if (!config.labels.empty()) cloud.labels = load_idx_labels(config.labels);
    } else {
        throw DataFormatError("dataset: unknown kind '" + config.kind + "'");
    }
    // The probe protocol is per-class; unlabeled data becomes one class.
    if (!cloud.labels)
        cloud.labels = std::vector<int>(std::size_t(cloud.size()), 0);
    cloud.validate();
    return cloud;
}

// ---------------------------------------------------------------------------
// Report serialization.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json entry_to_json(const ProbeEntry& entry) {
    nlohmann::ordered_json j;
    j["layer_index"] = entry.layer_index;
    j["layer_name"] = entry.layer_name;
    j["layer_width"] = entry.layer_width;
    j["representation"] = to_string(entry.representation);
    j["class_id"] = entry.class_id;
    j["method"] = to_string(entry.method);
    j["ok"] = entry.ok;
    if (entry.ok) {
        j["dimension"] = entry.dimension;
        j["ci_low"] = entry.ci_low;
        j["ci_high"] = entry.ci_high;
        j["n_used"] = entry.n_used;
    } else {
        j["note"] = entry.note;
    }
    return j;
}

inline nlohmann::ordered_json summary_to_json(const LayerSummary& summary) {
    nlohmann::ordered_json j;
    j["layer_index"] = summary.layer_index;
    j["layer_name"] = summary.layer_name;
    j["representation"] = to_string(summary.representation);
    j["method"] = to_string(summary.method);
    j["n_classes"] = summary.n_classes;
    j["mean_dimension"] = summary.mean_dimension;
    j["std_dimension"] = summary.std_dimension;
    j["ci_low"] = summary.ci_low;
    j["ci_high"] = summary.ci_high;
    j["two_std_low"] = summary.two_std_low;
    j["two_std_high"] = summary.two_std_high;
    return j;
}

inline nlohmann::ordered_json report_to_json(const ProbeReport& report) {
    nlohmann::ordered_json j;
    j["entries"] = nlohmann::ordered_json::array();
    for (const ProbeEntry& entry : report.entries)
        j["entries"].push_back(entry_to_json(entry));
    j["summaries"] = nlohmann::ordered_json::array();
    for (const LayerSummary& summary : report.summaries)
        j["summaries"].push_back(summary_to_json(summary));
    return j;
}

/// Consistency check run on every write: class averages must equal the
/// arithmetic mean of their ok entries.
inline void verify_report_consistency(const ProbeReport& report) {
    const std::vector<LayerSummary> recomputed =
        summarize_probe_entries(report.entries);
    if (recomputed.size() != report.summaries.size())
        throw NumericalError("report: summary cell count mismatch");
    for (std::size_t i = 0; i < recomputed.size(); ++i) {
        const double diff = std::abs(recomputed[i].mean_dimension -
                                     report.summaries[i].mean_dimension);
        if (diff > 1e-12)
            throw NumericalError("report: class average drifted from entries");
    }
}

inline std::string csv_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

inline void write_entries_csv(std::ostream& out, const std::string& phase,
                              const ProbeReport& report) {
    for (const ProbeEntry& e : report.entries) {
        out << phase << ',' << e.layer_index << ',' << e.layer_name << ','
            << e.layer_width << ',' << to_string(e.representation) << ','
            << e.class_id << ',' << to_string(e.method) << ','
            << (e.ok ? "ok" : "flagged") << ',';
        if (e.ok)
            out << csv_double(e.dimension) << ',' << csv_double(e.ci_low) << ','
                << csv_double(e.ci_high) << ',' << e.n_used;
        else
            out << ",,,";
        out << '\n';
    }
}

inline void write_summary_csv(std::ostream& out, const std::string& phase,
                              const ProbeReport& report) {
    for (const LayerSummary& s : report.summaries) {
        if (s.n_classes == 0) continue;
        out << phase << ',' << s.layer_index << ',' << s.layer_name << ','
            << to_string(s.representation) << ',' << to_string(s.method) << ','
            << s.n_classes << ',' << csv_double(s.mean_dimension) << ','
            << csv_double(s.ci_low) << ',' << csv_double(s.ci_high) << ','
            << csv_double(s.two_std_low) << ',' << csv_double(s.two_std_high)
            << '\n';
    }
}

inline std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace detail

struct RunArtifacts {
    std::string report_json;
    std::string entries_csv;
    std::string summary_csv;
    ProbeReport before;
    ProbeReport after;
};

/// Full pipeline: ingest -> optional train -> probe before/after -> phase
/// detection -> reports. Rerunning with the same config produces identical
/// outputs except the timestamp field. On error, partial outputs are removed.
inline RunArtifacts run_pipeline(const RunConfig& config) {
    namespace fs = std::filesystem;

    // Stage: ingest.
    PointCloud cloud;
    try {
        cloud = load_dataset(config.dataset);
    } catch (const std::exception& e) {
        throw DataFormatError(std::string("ingest: ") + e.what());
    }

    // Stage: model.
    MlpModel model;
    if (config.model) {
        const int n_classes = int(distinct_labels(cloud).size());
        std::vector<int> widths;
        widths.push_back(cloud.dim());
        for (const int w : config.model->hidden_widths) widths.push_back(w);
        widths.push_back(n_classes);
        std::vector<Activation> acts(widths.size() - 1, config.model->activation);
        acts.back() = Activation::linear;  // linear readout
        TrainConfig init_config;
        init_config.init = config.model->init;
        init_config.init_scale = config.model->init_scale;
        init_config.bias = config.model->bias;
        Rng rng(config.model->seed);
        model = make_mlp(widths, acts, init_config, rng);
    }

    std::vector<int> layers = config.probe.layers;
    if (layers.empty())
        for (int l = 0; l <= model.depth(); ++l) layers.push_back(l);
    for (const int l : layers)
        if (l < 0 || l > model.depth())
            throw UsageError("probe: layer " + std::to_string(l) +
                             " out of range for a depth-" +
                             std::to_string(model.depth()) + " model");

    ProbeOptions popts;
    popts.methods = config.probe.methods;
    popts.subsample = config.probe.subsample;
    popts.seed = config.probe.seed;
    popts.include_pre_activation = config.probe.include_pre_activation;
    popts.local.discard_fraction = config.probe.discard_fraction;
    popts.global.k = config.probe.k;
    popts.global.d_min = config.probe.d_min;
    popts.global.d_max = config.probe.d_max;
    popts.n_threads = config.n_threads;

    // Stage: probe at initialization.
    const ProbeReport before = probe_layers(model, cloud, layers, popts);

    // Stage: train.
    std::vector<double> loss_trace;
    MlpModel trained = model;
    const bool do_train = config.train && config.train->epochs > 0;
    if (do_train) {
        const LabeledDataset dataset = make_dataset(cloud);
        TrainResult result = train(std::move(trained), dataset, *config.train);
        trained = std::move(result.model);
        loss_trace = std::move(result.loss_trace);
    }

    // Stage: probe after training (identical sampling seeds).
    const ProbeReport after =
        do_train ? probe_layers(trained, cloud, layers, popts) : before;

    detail::verify_report_consistency(before);
    detail::verify_report_consistency(after);

    // Stage: analysis.
    nlohmann::ordered_json phases_json;
    const std::vector<double> series = class_average_series(
        after, config.probe.methods.front(), Representation::post);
    if (series.size() >= 3) {
        const PhaseSummary phases = detect_phases(series);
        phases_json["peak_layer"] = phases.peak_layer;
        phases_json["expansion_span"] = {phases.expansion_begin,
                                         phases.expansion_end};
        phases_json["compression_span"] = {phases.compression_begin,
                                           phases.compression_end};
        phases_json["monotonicity"] = phases.monotonicity;
        phases_json["series"] = series;
    }

    nlohmann::ordered_json expansion_json;
    if (config.probe.include_pre_activation) {
        const ExpansionRatios ratios =
            relu_expansion_ratios(filter_report(after, Representation::pre),
                                  filter_report(after, Representation::post));
        expansion_json["ratios"] = ratios.ratios;
        expansion_json["mean"] = ratios.mean;
        expansion_json["stddev"] = ratios.stddev;
        expansion_json["skipped"] = ratios.skipped;
    }

    // Stage: write reports.
    RunArtifacts artifacts;
    artifacts.before = before;
    artifacts.after = after;
    const fs::path dir(config.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    const fs::path json_path = dir / (config.output_prefix + "_report.json");
    const fs::path entries_path = dir / (config.output_prefix + "_entries.csv");
    const fs::path summary_path = dir / (config.output_prefix + "_layers.csv");
    artifacts.report_json = json_path.string();
    artifacts.entries_csv = entries_path.string();
    artifacts.summary_csv = summary_path.string();

    const auto cleanup = [&] {
        for (const auto& path : {json_path, entries_path, summary_path}) {
            std::error_code ignore;
            fs::remove(path, ignore);
        }
    };
    try {
        nlohmann::ordered_json doc;
        doc["format"] = "idprobe-report";
        doc["version"] = 1;
        doc["timestamp"] = detail::iso_timestamp();
        doc["config"] = config.echo;
        if (do_train) doc["loss_trace"] = loss_trace;
        doc["before"] = detail::report_to_json(before);
        doc["after"] = detail::report_to_json(after);
        doc["phases"] = phases_json;
        if (config.probe.include_pre_activation)
            doc["relu_expansion"] = expansion_json;

        std::ofstream json_out(json_path);
        if (!json_out)
            throw DataFormatError("report: cannot write " + json_path.string());
        json_out << doc.dump(1) << '\n';

        std::ofstream entries_out(entries_path);
        if (!entries_out)
            throw DataFormatError("report: cannot write " + entries_path.string());
        entries_out << "phase,layer_index,layer_name,layer_width,representation,"
                       "class_id,method,status,dimension,ci_low,ci_high,n_used\n";
        detail::write_entries_csv(entries_out, "before", before);
        detail::write_entries_csv(entries_out, "after", after);

        std::ofstream summary_out(summary_path);
        if (!summary_out)
            throw DataFormatError("report: cannot write " + summary_path.string());
        summary_out << "phase,layer_index,layer_name,representation,method,"
                       "n_classes,mean_dimension,ci_low,ci_high,two_std_low,"
                       "two_std_high\n";
        detail::write_summary_csv(summary_out, "before", before);
        detail::write_summary_csv(summary_out, "after", after);
    } catch (...) {
        cleanup();
        throw;
    }
    return artifacts;
}

}  // namespace idprobe
