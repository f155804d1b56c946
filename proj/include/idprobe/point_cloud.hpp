#pragma once

#include "idprobe/common.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace idprobe {

/// N samples by D coordinates, with optional integer class labels.
/// Immutable by convention once built; all library code treats it as
/// read-only, so clouds may be shared across worker threads.
struct PointCloud {
    RowMatrix points;
    std::optional<std::vector<int>> labels;

    PointCloud() = default;
    explicit PointCloud(RowMatrix pts) : points(std::move(pts)) {}
    PointCloud(RowMatrix pts, std::vector<int> lbls)
        : points(std::move(pts)), labels(std::move(lbls)) {}

    int size() const { return int(points.rows()); }
    int dim() const { return int(points.cols()); }
    bool labeled() const { return labels.has_value(); }

    /// Checks the structural invariants: D >= 1, finite coordinates,
    /// label count matching N, labels nonnegative.
    void validate() const {
        if (points.cols() < 1)
            throw UsageError("point cloud: dimension must be >= 1");
        if (!points.allFinite())
            throw DataFormatError("point cloud: non-finite coordinate");
        if (labels) {
            if (int(labels->size()) != size())
                throw DataFormatError("point cloud: label count " +
                                      std::to_string(labels->size()) +
                                      " does not match sample count " +
                                      std::to_string(size()));
            for (int label : *labels)
                if (label < 0)
                    throw DataFormatError("point cloud: negative class label");
        }
    }

    PointCloud select_rows(const std::vector<int>& rows) const {
        PointCloud out;
        out.points.resize(Eigen::Index(rows.size()), points.cols());
        for (std::size_t i = 0; i < rows.size(); ++i)
            out.points.row(Eigen::Index(i)) = points.row(rows[i]);
        if (labels) {
            std::vector<int> picked(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                picked[i] = (*labels)[std::size_t(rows[i])];
            out.labels = std::move(picked);
        }
        return out;
    }
};

/// Inputs plus one-hot targets, for supervised training.
struct LabeledDataset {
    PointCloud inputs;
    RowMatrix targets;  // N x c, exactly one 1 per row

    int size() const { return inputs.size(); }
    int classes() const { return int(targets.cols()); }

    void validate() const {
        inputs.validate();
        if (targets.rows() != inputs.points.rows())
            throw DataFormatError("dataset: target rows do not match inputs");
        if (targets.cols() < 1)
            throw DataFormatError("dataset: at least one class required");
        for (Eigen::Index i = 0; i < targets.rows(); ++i) {
            int ones = 0;
            double sum = 0.0;
            for (Eigen::Index j = 0; j < targets.cols(); ++j) {
                const double v = targets(i, j);
                sum += v;
                if (v == 1.0) ++ones;
                else if (v != 0.0)
                    throw DataFormatError("dataset: target row " +
                                          std::to_string(i) +
                                          " is not one-hot");
            }
            if (ones != 1 || sum != 1.0)
                throw DataFormatError("dataset: target row " +
                                      std::to_string(i) + " is not one-hot");
        }
    }
};

/// Distinct labels in ascending order.
inline std::vector<int> distinct_labels(const PointCloud& cloud) {
    if (!cloud.labels)
        throw UsageError("distinct_labels: cloud has no labels");
    std::vector<int> labels = *cloud.labels;
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

/// Row indices of each class, keyed ascending by label. Row order within a
/// class preserves the original cloud order.
inline std::vector<std::pair<int, std::vector<int>>> split_by_class_indices(
    const PointCloud& cloud) {
    if (!cloud.labels)
        throw UsageError("split_by_class: cloud has no labels");
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < cloud.size(); ++i)
        groups[(*cloud.labels)[std::size_t(i)]].push_back(i);
    std::vector<std::pair<int, std::vector<int>>> out;
    out.reserve(groups.size());
    for (auto& [label, rows] : groups) out.emplace_back(label, std::move(rows));
    return out;
}

/// One sub-cloud per distinct label, ascending label order.
inline std::vector<PointCloud> split_by_class(const PointCloud& cloud) {
    std::vector<PointCloud> out;
    for (const auto& [label, rows] : split_by_class_indices(cloud)) {
        (void)label;
        out.push_back(cloud.select_rows(rows));
    }
    return out;
}

/// One-hot targets from labels; class columns follow ascending label order.
inline LabeledDataset make_dataset(PointCloud cloud) {
    if (!cloud.labels)
        throw UsageError("make_dataset: cloud has no labels");
    const std::vector<int> labels = distinct_labels(cloud);
    std::map<int, int> column;
    for (std::size_t j = 0; j < labels.size(); ++j)
        column[labels[j]] = int(j);
    LabeledDataset ds;
    ds.targets = RowMatrix::Zero(cloud.size(), Eigen::Index(labels.size()));
    for (int i = 0; i < cloud.size(); ++i)
        ds.targets(i, column[(*cloud.labels)[std::size_t(i)]]) = 1.0;
    ds.inputs = std::move(cloud);
    return ds;
}

}  // namespace idprobe
