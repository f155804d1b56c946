#pragma once

#include "idprobe/common.hpp"
#include "idprobe/global_id.hpp"
#include "idprobe/local_id.hpp"
#include "idprobe/mlp.hpp"
#include "idprobe/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace idprobe {

/// Which side of the nonlinearity a probed representation comes from.
enum class Representation { post, pre };

inline const char* to_string(Representation repr) {
    return repr == Representation::post ? "post" : "pre";
}

struct ProbeEntry {
    int layer_index = 0;
    std::string layer_name;
    int layer_width = 0;
    Representation representation = Representation::post;
    int class_id = 0;
    IdMethod method = IdMethod::local;
    bool ok = false;
    double dimension = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n_used = 0;
    std::string note;  // why the entry was flagged, when !ok
};

/// Across-class statistics for one (layer, representation, method) cell.
/// Both the 95% confidence interval (mean +- 1.96 std/sqrt(n)) and the
/// two-standard-deviation band are reported.
struct LayerSummary {
    int layer_index = 0;
    std::string layer_name;
    Representation representation = Representation::post;
    IdMethod method = IdMethod::local;
    int n_classes = 0;
    double mean_dimension = 0.0;
    double std_dimension = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double two_std_low = 0.0;
    double two_std_high = 0.0;
};

struct PhaseSummary {
    int peak_layer = 0;          // position in the probed layer list
    int expansion_begin = 0;     // [first, peak]
    int expansion_end = 0;
    int compression_begin = 0;   // [peak, last]
    int compression_end = 0;
    double monotonicity = 0.0;   // strictly-monotone step fraction
};

struct ProbeReport {
    std::vector<ProbeEntry> entries;
    std::vector<LayerSummary> summaries;
};

struct ProbeOptions {
    std::vector<IdMethod> methods = {IdMethod::local};
    int subsample = 1000;
    std::uint64_t seed = 0;
    bool include_pre_activation = false;
    LocalIdOptions local;
    GlobalIdOptions global;
    int n_threads = 0;
};

namespace detail {

inline std::string layer_name_for(const MlpModel& model, int layer_index,
                                  Representation repr) {
    if (layer_index == 0) return "input";
    const Activation act = model.layers[std::size_t(layer_index - 1)].activation;
    const std::string base = "dense" + std::to_string(layer_index);
    if (repr == Representation::pre) return base + "-pre";
    return base + "-" + to_string(act);
}

inline int layer_width_for(const MlpModel& model, int layer_index) {
    return layer_index == 0 ? model.input_dim()
                            : model.layers[std::size_t(layer_index - 1)].fan_out();
}

}  // namespace detail

/// Recomputes the across-class summaries from the entries.
inline std::vector<LayerSummary> summarize_probe_entries(
    const std::vector<ProbeEntry>& entries) {
    using Key = std::tuple<int, int, int>;  // layer, representation, method
    std::map<Key, std::vector<const ProbeEntry*>> cells;
    std::vector<Key> order;
    for (const ProbeEntry& entry : entries) {
        const Key key{entry.layer_index, int(entry.representation),
                      int(entry.method)};
        if (cells.find(key) == cells.end()) order.push_back(key);
        cells[key].push_back(&entry);
    }
    std::vector<LayerSummary> summaries;
    for (const Key& key : order) {
        const auto& cell = cells[key];
        LayerSummary summary;
        summary.layer_index = std::get<0>(key);
        summary.representation = Representation(std::get<1>(key));
        summary.method = IdMethod(std::get<2>(key));
        summary.layer_name = cell.front()->layer_name;
        double sum = 0.0;
        int n = 0;
        for (const ProbeEntry* entry : cell) {
            if (!entry->ok) continue;
            sum += entry->dimension;
            ++n;
        }
        summary.n_classes = n;
        if (n == 0) {
            summaries.push_back(summary);
            continue;
        }
        summary.mean_dimension = sum / double(n);
        double ss = 0.0;
        for (const ProbeEntry* entry : cell) {
            if (!entry->ok) continue;
            const double dev = entry->dimension - summary.mean_dimension;
            ss += dev * dev;
        }
        summary.std_dimension = n > 1 ? std::sqrt(ss / double(n - 1)) : 0.0;
        const double half_ci = 1.96 * summary.std_dimension / std::sqrt(double(n));
        summary.ci_low = summary.mean_dimension - half_ci;
        summary.ci_high = summary.mean_dimension + half_ci;
        summary.two_std_low = summary.mean_dimension - 2.0 * summary.std_dimension;
        summary.two_std_high = summary.mean_dimension + 2.0 * summary.std_dimension;
        summaries.push_back(summary);
    }
    return summaries;
}

/// Probes the chosen layers of a model over a labeled cloud: extracts the
/// representation, splits by class, subsamples each class (deterministically
/// from the seed and class label, so every layer sees the same points), and
/// runs each estimator. Classes an estimator rejects are flagged, not fatal.
inline ProbeReport probe_layers(const MlpModel& model, const PointCloud& cloud,
                                const std::vector<int>& layers,
                                ProbeOptions opts = {}) {
    if (!cloud.labels) throw UsageError("probe: cloud has no labels");
    if (opts.methods.empty()) throw UsageError("probe: no methods requested");
    if (opts.subsample < 1) throw UsageError("probe: subsample must be >= 1");
    const auto classes = split_by_class_indices(cloud);

    // One subsample per class, shared by every layer and method.
    std::vector<std::pair<int, std::vector<int>>> picks;
    picks.reserve(classes.size());
    const Rng root(opts.seed);
    for (const auto& [label, rows] : classes) {
        Rng rng = root.spawn(std::uint64_t(label));
        std::vector<int> chosen =
            rng.sample_without_replacement(int(rows.size()),
                                           std::min<int>(opts.subsample, int(rows.size())));
        std::sort(chosen.begin(), chosen.end());
        std::vector<int> mapped(chosen.size());
        for (std::size_t i = 0; i < chosen.size(); ++i)
            mapped[i] = rows[std::size_t(chosen[i])];
        picks.emplace_back(label, std::move(mapped));
    }

    ProbeReport report;
    for (const int layer_index : layers) {
        std::vector<Representation> reprs = {Representation::post};
        if (opts.include_pre_activation && layer_index >= 1)
            reprs.push_back(Representation::pre);
        for (const Representation repr : reprs) {
            const PointCloud activations =
                repr == Representation::post
                    ? extract_activations(model, cloud, layer_index)
                    : extract_preactivations(model, cloud, layer_index);
            for (const auto& [label, rows] : picks) {
                const PointCloud class_cloud = activations.select_rows(rows);
                for (const IdMethod method : opts.methods) {
                    ProbeEntry entry;
                    entry.layer_index = layer_index;
                    entry.layer_name = detail::layer_name_for(model, layer_index, repr);
                    entry.layer_width = detail::layer_width_for(model, layer_index);
                    entry.representation = repr;
                    entry.class_id = label;
                    entry.method = method;
                    try {
                        LocalIdOptions local = opts.local;
                        local.n_threads = opts.n_threads;
                        GlobalIdOptions global = opts.global;
                        global.n_threads = opts.n_threads;
                        const IdEstimate est =
                            method == IdMethod::local
                                ? estimate_local_id(class_cloud, local)
                                : estimate_global_id(class_cloud, global);
                        entry.ok = true;
                        entry.dimension = est.dimension;
                        entry.ci_low = est.ci_low;
                        entry.ci_high = est.ci_high;
                        entry.n_used = est.n_used;
                    } catch (const NumericalError& error) {
                        entry.ok = false;
                        entry.note = error.what();
                    }
                    report.entries.push_back(std::move(entry));
                }
            }
        }
    }
    report.summaries = summarize_probe_entries(report.entries);
    return report;
}

/// Peak position and strict-monotonicity score of a class-averaged
/// dimension series: the fraction of strictly increasing steps before the
/// peak plus strictly decreasing steps after it, over all steps.
inline PhaseSummary detect_phases(const std::vector<double>& series) {
    if (series.size() < 3)
        throw UsageError("detect_phases: need at least 3 probed layers");
    PhaseSummary phases;
    int peak = 0;
    for (std::size_t i = 1; i < series.size(); ++i)
        if (series[i] > series[std::size_t(peak)]) peak = int(i);
    phases.peak_layer = peak;
    phases.expansion_begin = 0;
    phases.expansion_end = peak;
    phases.compression_begin = peak;
    phases.compression_end = int(series.size()) - 1;
    int good = 0;
    const int steps = int(series.size()) - 1;
    for (int i = 0; i < steps; ++i) {
        if (i < peak && series[std::size_t(i + 1)] > series[std::size_t(i)]) ++good;
        if (i >= peak && series[std::size_t(i + 1)] < series[std::size_t(i)]) ++good;
    }
    phases.monotonicity = double(good) / double(steps);
    return phases;
}

/// The class-averaged dimension per probed layer for one method and
/// representation, in the order the layers were probed.
inline std::vector<double> class_average_series(const ProbeReport& report,
                                                IdMethod method,
                                                Representation repr =
                                                    Representation::post) {
    std::vector<double> series;
    for (const LayerSummary& summary : report.summaries)
        if (summary.method == method && summary.representation == repr &&
            summary.n_classes > 0)
            series.push_back(summary.mean_dimension);
    return series;
}

inline PhaseSummary detect_phases(const ProbeReport& report,
                                  IdMethod method = IdMethod::local) {
    return detect_phases(class_average_series(report, method));
}

/// Keeps only entries of one representation; summaries are recomputed.
inline ProbeReport filter_report(const ProbeReport& report, Representation repr) {
    ProbeReport out;
    for (const ProbeEntry& entry : report.entries)
        if (entry.representation == repr) out.entries.push_back(entry);
    out.summaries = summarize_probe_entries(out.entries);
    return out;
}

/// Per-(layer, class, method) ratios dimension_after / dimension_before
/// between two reports, e.g. post-relu over pre-relu.
struct ExpansionRatios {
    std::vector<double> ratios;
    double mean = 0.0;
    double stddev = 0.0;
    int skipped = 0;  // pairs missing or flagged on either side
};

inline ExpansionRatios relu_expansion_ratios(const ProbeReport& before,
                                             const ProbeReport& after) {
    using Key = std::tuple<int, int, int>;  // layer, class, method
    std::map<Key, const ProbeEntry*> lookup;
    for (const ProbeEntry& entry : before.entries)
        lookup[Key{entry.layer_index, entry.class_id, int(entry.method)}] = &entry;
    ExpansionRatios out;
    for (const ProbeEntry& entry : after.entries) {
        const auto it =
            lookup.find(Key{entry.layer_index, entry.class_id, int(entry.method)});
        if (it == lookup.end() || !it->second->ok || !entry.ok ||
            it->second->dimension <= 0.0) {
            ++out.skipped;
            continue;
        }
        out.ratios.push_back(entry.dimension / it->second->dimension);
    }
    if (!out.ratios.empty()) {
        double sum = 0.0;
        for (const double r : out.ratios) sum += r;
        out.mean = sum / double(out.ratios.size());
        if (out.ratios.size() > 1) {
            double ss = 0.0;
            for (const double r : out.ratios) {
                const double dev = r - out.mean;
                ss += dev * dev;
            }
            out.stddev = std::sqrt(ss / double(out.ratios.size() - 1));
        }
    }
    return out;
}

}  // namespace idprobe
