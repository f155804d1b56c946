#pragma once

#include "idprobe/common.hpp"
#include "idprobe/point_cloud.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace idprobe {

enum class Activation { linear, relu };

inline const char* to_string(Activation act) {
    return act == Activation::linear ? "linear" : "relu";
}

inline Activation activation_from_string(const std::string& name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    throw DataFormatError("unknown activation '" + name + "'");
}

/// One dense layer: out x in weight matrix, optional bias, activation.
/// Biases default off; the reference network equations have none.
struct DenseLayer {
    RowMatrix weights;        // out x in
    Eigen::VectorXd bias;     // size 0 when disabled
    Activation activation = Activation::linear;

    int fan_in() const { return int(weights.cols()); }
    int fan_out() const { return int(weights.rows()); }
    bool has_bias() const { return bias.size() > 0; }
};

struct MlpModel {
    std::vector<DenseLayer> layers;

    int input_dim() const {
        return layers.empty() ? 0 : layers.front().fan_in();
    }
    int output_dim() const {
        return layers.empty() ? 0 : layers.back().fan_out();
    }
    int depth() const { return int(layers.size()); }

    void validate() const {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (!layers[l].weights.allFinite())
                throw NumericalError("mlp: non-finite weight in layer " +
                                     std::to_string(l));
            if (l > 0 && layers[l].fan_in() != layers[l - 1].fan_out())
                throw UsageError("mlp: layer " + std::to_string(l) +
                                 " input width " +
                                 std::to_string(layers[l].fan_in()) +
                                 " does not match previous output " +
                                 std::to_string(layers[l - 1].fan_out()));
        }
    }
};

enum class InitKind {
    gaussian,        // every layer N(0, scale/sqrt(fan_in))
    identity_hidden  // first layer gaussian, all later layers identity
};

struct TrainConfig {
    double learning_rate_start = 0.01;
    double learning_rate_decay_per_epoch = 0.0001;
    int epochs = 30;
    int batch_size = 64;
    double weight_noise_sigma = 0.0;
    std::uint64_t seed = 0;
    InitKind init = InitKind::gaussian;
    double init_scale = 1.0;
    bool bias = false;

    double learning_rate(int epoch) const {
        return std::max(0.0, learning_rate_start -
                                 learning_rate_decay_per_epoch * epoch);
    }
};

/// Builds a model with the given layer widths (input first) and one
/// activation per layer. `identity_hidden` draws the first layer from a
/// Gaussian and sets every later weight matrix to a (truncated or padded)
/// identity; off-square identities keep ones on the main diagonal only.
inline MlpModel make_mlp(const std::vector<int>& widths,
                         const std::vector<Activation>& activations,
                         const TrainConfig& config, Rng& rng) {
    if (widths.size() < 2)
        throw UsageError("make_mlp: need at least input and output widths");
    if (activations.size() != widths.size() - 1)
        throw UsageError("make_mlp: one activation per layer required");
    MlpModel model;
    model.layers.resize(widths.size() - 1);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        DenseLayer& layer = model.layers[l];
        const int in = widths[l];
        const int out = widths[l + 1];
        layer.activation = activations[l];
        layer.weights.resize(out, in);
        const bool identity =
            config.init == InitKind::identity_hidden && l > 0;
        if (identity) {
            layer.weights.setZero();
            for (int i = 0; i < std::min(out, in); ++i) layer.weights(i, i) = 1.0;
        } else {
            const double stddev = config.init_scale / std::sqrt(double(in));
            for (int i = 0; i < out; ++i)
                for (int j = 0; j < in; ++j)
                    layer.weights(i, j) = stddev * rng.gaussian();
        }
        if (config.bias) layer.bias = Eigen::VectorXd::Zero(out);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Forward pass and loss.
// ---------------------------------------------------------------------------

namespace detail {

inline void apply_activation(RowMatrix& values, Activation act) {
    if (act == Activation::relu)
        values = values.cwiseMax(0.0);
}

}  // namespace detail

/// Batched forward pass; rows are samples. Returns post-activation values
/// of every layer (last entry is the network output).
inline std::vector<RowMatrix> forward_batch(const MlpModel& model,
                                            const RowMatrix& inputs) {
    if (int(inputs.cols()) != model.input_dim())
        throw UsageError("forward: input width " + std::to_string(inputs.cols()) +
                         " does not match model input " +
                         std::to_string(model.input_dim()));
    std::vector<RowMatrix> activations;
    activations.reserve(model.layers.size());
    const RowMatrix* current = &inputs;
    for (const DenseLayer& layer : model.layers) {
        RowMatrix z = (*current) * layer.weights.transpose();
        if (layer.has_bias()) z.rowwise() += layer.bias.transpose();
        detail::apply_activation(z, layer.activation);
        activations.push_back(std::move(z));
        current = &activations.back();
    }
    return activations;
}

struct ForwardResult {
    Eigen::VectorXd output;
    std::vector<Eigen::VectorXd> activations;  // post-activation per layer
};

/// Single-sample forward pass returning the output and every layer's
/// post-activation vector.
inline ForwardResult forward(const MlpModel& model, const Eigen::VectorXd& x) {
    RowMatrix row(1, x.size());
    row.row(0) = x.transpose();
    const std::vector<RowMatrix> acts = forward_batch(model, row);
    ForwardResult result;
    result.activations.reserve(acts.size());
    for (const RowMatrix& a : acts)
        result.activations.push_back(a.row(0).transpose());
    result.output = result.activations.back();
    return result;
}

/// Summed (not averaged) squared error over the dataset.
inline double mse_loss(const MlpModel& model, const LabeledDataset& dataset) {
    const std::vector<RowMatrix> acts = forward_batch(model, dataset.inputs.points);
    return (dataset.targets - acts.back()).squaredNorm();
}

// ---------------------------------------------------------------------------
// Gradients and SGD.
// ---------------------------------------------------------------------------

/// Gradients of the summed squared error over the batch, one matrix per
/// layer (plus bias vectors when present). d/dy (y_hat - y)^2 carries the
/// factor 2, no 1/2 convention.
struct Gradients {
    std::vector<RowMatrix> weights;
    std::vector<Eigen::VectorXd> bias;
};

inline Gradients gradients(const MlpModel& model, const RowMatrix& inputs,
                           const RowMatrix& targets, double* batch_loss = nullptr) {
    const int depth = model.depth();
    // Forward, caching pre-activations for the relu mask.
    std::vector<RowMatrix> pre, post;
    pre.resize(std::size_t(depth));
    post.resize(std::size_t(depth));
    const RowMatrix* current = &inputs;
    for (int l = 0; l < depth; ++l) {
        const DenseLayer& layer = model.layers[std::size_t(l)];
        pre[std::size_t(l)] = (*current) * layer.weights.transpose();
        if (layer.has_bias())
            pre[std::size_t(l)].rowwise() += layer.bias.transpose();
        post[std::size_t(l)] = pre[std::size_t(l)];
        detail::apply_activation(post[std::size_t(l)], layer.activation);
        current = &post[std::size_t(l)];
    }
    if (batch_loss) *batch_loss = (targets - post[std::size_t(depth - 1)]).squaredNorm();

    Gradients grads;
    grads.weights.resize(std::size_t(depth));
    grads.bias.resize(std::size_t(depth));
    RowMatrix delta = 2.0 * (post[std::size_t(depth - 1)] - targets);
    for (int l = depth - 1; l >= 0; --l) {
        const DenseLayer& layer = model.layers[std::size_t(l)];
        if (layer.activation == Activation::relu)
            delta = ((pre[std::size_t(l)].array() > 0.0).cast<double>() *
                     delta.array())
                        .matrix();
        const RowMatrix& below = l == 0 ? inputs : post[std::size_t(l - 1)];
        grads.weights[std::size_t(l)] = delta.transpose() * below;
        if (layer.has_bias())
            grads.bias[std::size_t(l)] = delta.colwise().sum().transpose();
        if (l > 0) delta = delta * layer.weights;
    }
    return grads;
}

/// One SGD step on the summed batch loss: W <- W - eta * grad, then, when
/// sigma > 0, i.i.d. Gaussian noise of standard deviation sigma is added to
/// every weight entry of every layer.
inline void sgd_step(MlpModel& model, const RowMatrix& inputs,
                     const RowMatrix& targets, double eta, double sigma,
                     Rng& rng) {
    if (eta <= 0.0) throw UsageError("sgd_step: learning rate must be > 0");
    if (sigma < 0.0) throw UsageError("sgd_step: sigma must be >= 0");
    const Gradients grads = gradients(model, inputs, targets);
    for (int l = 0; l < model.depth(); ++l) {
        DenseLayer& layer = model.layers[std::size_t(l)];
        layer.weights.noalias() -= eta * grads.weights[std::size_t(l)];
        if (layer.has_bias()) layer.bias -= eta * grads.bias[std::size_t(l)];
    }
    if (sigma > 0.0) {
        for (DenseLayer& layer : model.layers) {
            double* w = layer.weights.data();
            const std::size_t count = std::size_t(layer.weights.size());
            for (std::size_t i = 0; i < count; ++i) w[i] += sigma * rng.gaussian();
        }
    }
}

struct TrainResult {
    MlpModel model;
    std::vector<double> loss_trace;  // summed loss after each epoch
};

/// Mini-batch SGD: per-epoch seeded shuffle, learning rate decaying linearly
/// per epoch, optional weight-noise injection after every step. Deterministic
/// for a fixed config.
inline TrainResult train(MlpModel model, const LabeledDataset& dataset,
                         const TrainConfig& config) {
    if (config.batch_size < 1) throw UsageError("train: batch_size must be >= 1");
    if (config.epochs < 0) throw UsageError("train: epochs must be >= 0");
    model.validate();
    Rng rng(config.seed);
    const int n = dataset.size();
    std::vector<int> order(std::size_t(n), 0);
    for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;

    TrainResult result;
    result.loss_trace.reserve(std::size_t(config.epochs));
    RowMatrix batch_x, batch_y;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double eta = config.learning_rate(epoch);
        rng.shuffle(order);
        if (eta > 0.0) {
            for (int start = 0; start < n; start += config.batch_size) {
                const int size = std::min(config.batch_size, n - start);
                batch_x.resize(size, dataset.inputs.dim());
                batch_y.resize(size, dataset.classes());
                for (int i = 0; i < size; ++i) {
                    const int row = order[std::size_t(start + i)];
                    batch_x.row(i) = dataset.inputs.points.row(row);
                    batch_y.row(i) = dataset.targets.row(row);
                }
                sgd_step(model, batch_x, batch_y, eta,
                         config.weight_noise_sigma, rng);
            }
        }
        const double loss = mse_loss(model, dataset);
        if (!std::isfinite(loss))
            throw NumericalError("train: loss diverged at epoch " +
                                 std::to_string(epoch));
        result.loss_trace.push_back(loss);
    }
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// Representation extraction.
// ---------------------------------------------------------------------------

/// Post-activation vectors of the chosen layer for every input; index 0 is
/// the input itself. Labels are carried over unchanged.
inline PointCloud extract_activations(const MlpModel& model,
                                      const PointCloud& cloud, int layer_index) {
    if (layer_index < 0 || layer_index > model.depth())
        throw UsageError("extract_activations: layer index " +
                         std::to_string(layer_index) + " out of range [0, " +
                         std::to_string(model.depth()) + "]");
    if (layer_index == 0) return cloud;
    PointCloud out;
    const RowMatrix* current = &cloud.points;
    RowMatrix buffer;
    for (int l = 0; l < layer_index; ++l) {
        const DenseLayer& layer = model.layers[std::size_t(l)];
        buffer = (*current) * layer.weights.transpose();
        if (layer.has_bias()) buffer.rowwise() += layer.bias.transpose();
        detail::apply_activation(buffer, layer.activation);
        current = &buffer;
    }
    out.points = buffer;
    out.labels = cloud.labels;
    return out;
}

/// Pre-activation vectors (the weighted sums before the nonlinearity) of the
/// chosen layer, layer_index in [1, depth].
inline PointCloud extract_preactivations(const MlpModel& model,
                                         const PointCloud& cloud,
                                         int layer_index) {
    if (layer_index < 1 || layer_index > model.depth())
        throw UsageError("extract_preactivations: layer index " +
                         std::to_string(layer_index) + " out of range [1, " +
                         std::to_string(model.depth()) + "]");
    const PointCloud below = extract_activations(model, cloud, layer_index - 1);
    const DenseLayer& layer = model.layers[std::size_t(layer_index - 1)];
    PointCloud out;
    out.points = below.points * layer.weights.transpose();
    if (layer.has_bias()) out.points.rowwise() += layer.bias.transpose();
    out.labels = cloud.labels;
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON container with layer shapes, activation kinds
// and row-major weights; doubles are serialized in round-trip form.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json model_to_json(const MlpModel& model) {
    nlohmann::ordered_json doc;
    doc["format"] = "idprobe-mlp";
    doc["version"] = 1;
    doc["layers"] = nlohmann::ordered_json::array();
    for (const DenseLayer& layer : model.layers) {
        nlohmann::ordered_json entry;
        entry["rows"] = layer.fan_out();
        entry["cols"] = layer.fan_in();
        entry["activation"] = to_string(layer.activation);
        std::vector<double> flat(layer.weights.data(),
                                 layer.weights.data() + layer.weights.size());
        entry["weights"] = std::move(flat);
        if (layer.has_bias()) {
            std::vector<double> bias(layer.bias.data(),
                                     layer.bias.data() + layer.bias.size());
            entry["bias"] = std::move(bias);
        }
        doc["layers"].push_back(std::move(entry));
    }
    return doc;
}

inline MlpModel model_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("format", "") != "idprobe-mlp")
        throw DataFormatError("checkpoint: not an idprobe-mlp container");
    if (doc.value("version", 0) != 1)
        throw DataFormatError("checkpoint: unsupported version");
    MlpModel model;
    for (const auto& entry : doc.at("layers")) {
        DenseLayer layer;
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        layer.activation = activation_from_string(entry.at("activation").get<std::string>());
        const auto& weights = entry.at("weights");
        if (int(weights.size()) != rows * cols)
            throw DataFormatError("checkpoint: weight count mismatch");
        layer.weights.resize(rows, cols);
        for (int i = 0; i < rows * cols; ++i)
            layer.weights.data()[i] = weights[std::size_t(i)].get<double>();
        if (entry.contains("bias")) {
            const auto& bias = entry.at("bias");
            if (int(bias.size()) != rows)
                throw DataFormatError("checkpoint: bias size mismatch");
            layer.bias.resize(rows);
            for (int i = 0; i < rows; ++i)
                layer.bias(i) = bias[std::size_t(i)].get<double>();
        }
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

inline void save_model(const MlpModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataFormatError("checkpoint: cannot write " + path);
    out << model_to_json(model).dump(1) << '\n';
}

inline MlpModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("checkpoint: cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError("checkpoint: invalid JSON in " + path + ": " +
                              e.what());
    }
    return model_from_json(doc);
}

}  // namespace idprobe
