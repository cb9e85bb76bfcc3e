#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bdfl/dataset.hpp"

namespace bdfl {

enum class Architecture { logistic, mlp };

// Model shape. Weights live in one flat vector: per layer, the (out x in)
// weight matrix row-major, then the bias. mlp uses tanh hidden activations
// and a softmax output; logistic is the no-hidden-layer special case.
struct ModelSpec {
    Architecture arch = Architecture::mlp;
    int input_dim = 0;
    int num_classes = 0;
    std::vector<int> hidden;  // ignored for logistic

    std::vector<int> layer_dims() const {
        std::vector<int> dims;
        dims.push_back(input_dim);
        if (arch == Architecture::mlp)
            for (int h : hidden) dims.push_back(h);
        dims.push_back(num_classes);
        return dims;
    }

    Eigen::Index weight_count() const {
        auto dims = layer_dims();
        Eigen::Index n = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l)
            n += static_cast<Eigen::Index>(dims[l + 1]) * dims[l] + dims[l + 1];
        return n;
    }

    bool operator==(const ModelSpec&) const = default;
};

struct ShapeMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainingDivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Model {
    ModelSpec spec;
    Eigen::VectorXd w;
};

inline Model init_model(const ModelSpec& spec, std::uint64_t seed) {
    Model m;
    m.spec = spec;
    m.w = Eigen::VectorXd::Zero(spec.weight_count());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto dims = spec.layer_dims();
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const Eigen::Index rows = dims[l + 1], cols = dims[l];
        const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
        for (Eigen::Index i = 0; i < rows * cols; ++i) m.w(pos + i) = scale * normal(rng);
        pos += rows * cols + rows;  // biases stay zero
    }
    return m;
}

namespace detail {

using RowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct LayerView {
    RowMajorMap W;
    Eigen::Map<const Eigen::VectorXd> b;
};

inline std::vector<LayerView> layer_views(const ModelSpec& spec, const Eigen::VectorXd& w) {
    if (w.size() != spec.weight_count())
        throw ShapeMismatchError("weight vector has " + std::to_string(w.size()) +
                                 " entries, spec wants " + std::to_string(spec.weight_count()));
    std::vector<LayerView> views;
    auto dims = spec.layer_dims();
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const Eigen::Index rows = dims[l + 1], cols = dims[l];
        views.push_back(LayerView{RowMajorMap(w.data() + pos, rows, cols),
                                  Eigen::Map<const Eigen::VectorXd>(w.data() + pos + rows * cols,
                                                                    rows)});
        pos += rows * cols + rows;
    }
    return views;
}

}  // namespace detail

// Logits for a batch (one row per sample).
inline Eigen::MatrixXd forward_logits(const ModelSpec& spec, const Eigen::VectorXd& w,
                                      const Eigen::MatrixXd& X) {
    if (X.cols() != spec.input_dim)
        throw ShapeMismatchError("input dim " + std::to_string(X.cols()) + ", spec wants " +
                                 std::to_string(spec.input_dim));
    auto views = detail::layer_views(spec, w);
    Eigen::MatrixXd A = X;
    for (std::size_t l = 0; l < views.size(); ++l) {
        Eigen::MatrixXd Z = (A * views[l].W.transpose()).rowwise() + views[l].b.transpose();
        if (l + 1 < views.size())
            A = Z.array().tanh().matrix();
        else
            A = std::move(Z);
    }
    return A;
}

// Fraction classified correctly; argmax ties resolve to the lowest class
// index (strict > while scanning ascending).
inline double evaluate_accuracy(const ModelSpec& spec, const Eigen::VectorXd& w,
                                const Dataset& ds) {
    if (ds.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    Eigen::MatrixXd logits = forward_logits(spec, w, ds.features);
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (int c = 1; c < spec.num_classes; ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        if (best == ds.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

namespace detail {

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& Z) {
    Eigen::MatrixXd P = (Z.colwise() - Z.rowwise().maxCoeff()).array().exp();
    for (Eigen::Index i = 0; i < P.rows(); ++i) P.row(i) /= P.row(i).sum();
    return P;
}

}  // namespace detail

// Mean cross-entropy loss over the batch, plus the gradient wrt the flat
// weight vector when grad != nullptr (standard backprop).
inline double loss_and_gradient(const ModelSpec& spec, const Eigen::VectorXd& w,
                                const Eigen::MatrixXd& X, const std::vector<int>& y,
                                Eigen::VectorXd* grad) {
    const Eigen::Index n = X.rows();
    if (n == 0) throw std::invalid_argument("loss_and_gradient: empty batch");
    auto views = detail::layer_views(spec, w);

    std::vector<Eigen::MatrixXd> activations;  // activations[l] = input to layer l
    activations.reserve(views.size() + 1);
    activations.push_back(X);
    for (std::size_t l = 0; l < views.size(); ++l) {
        Eigen::MatrixXd Z =
            (activations.back() * views[l].W.transpose()).rowwise() + views[l].b.transpose();
        if (l + 1 < views.size())
            activations.push_back(Z.array().tanh().matrix());
        else
            activations.push_back(std::move(Z));
    }

    Eigen::MatrixXd P = detail::softmax_rows(activations.back());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        loss -= std::log(std::max(P(i, y[static_cast<std::size_t>(i)]), 1e-300));
    loss /= static_cast<double>(n);

    if (grad) {
        grad->setZero(w.size());
        Eigen::MatrixXd delta = P;  // dLoss/dZ_last
        for (Eigen::Index i = 0; i < n; ++i) delta(i, y[static_cast<std::size_t>(i)]) -= 1.0;
        delta /= static_cast<double>(n);

        auto dims = spec.layer_dims();
        std::vector<Eigen::Index> offsets;
        Eigen::Index pos = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            offsets.push_back(pos);
            pos += static_cast<Eigen::Index>(dims[l + 1]) * dims[l] + dims[l + 1];
        }
        for (std::size_t l = views.size(); l-- > 0;) {
            const Eigen::Index rows = dims[l + 1], cols = dims[l];
            detail::RowMajorMutMap dW(grad->data() + offsets[l], rows, cols);
            Eigen::Map<Eigen::VectorXd> db(grad->data() + offsets[l] + rows * cols, rows);
            dW = delta.transpose() * activations[l];
            db = delta.colwise().sum();
            if (l > 0) {
                Eigen::MatrixXd dA = delta * views[l].W;
                // tanh' = 1 - tanh^2, and activations[l] already holds tanh(Z)
                delta = dA.array() * (1.0 - activations[l].array().square());
            }
        }
    }
    return loss;
}

// Mini-batch SGD with cross-entropy loss. Batch order is a seeded shuffle per
// epoch, so training is a pure function of (weights, data, hyperparams, rng
// state). Throws TrainingDivergedError when the loss goes non-finite.
inline void train_epochs(Model& model, const Dataset& ds, double lr, int epochs, int batch_size,
                         std::mt19937_64& rng) {
    if (ds.empty()) throw std::invalid_argument("train_epochs: empty dataset");
    if (lr < 0.0) throw std::invalid_argument("train_epochs: negative learning rate");
    if (batch_size < 1) throw std::invalid_argument("train_epochs: batch_size must be >= 1");
    const Eigen::Index n = ds.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Eigen::VectorXd grad(model.w.size());
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += batch_size) {
            const Eigen::Index count = std::min<Eigen::Index>(batch_size, n - start);
            Eigen::MatrixXd X(count, ds.dim());
            std::vector<int> y(static_cast<std::size_t>(count));
            for (Eigen::Index i = 0; i < count; ++i) {
                X.row(i) = ds.features.row(order[static_cast<std::size_t>(start + i)]);
                y[static_cast<std::size_t>(i)] =
                    ds.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
            }
            double loss = loss_and_gradient(model.spec, model.w, X, y, &grad);
            if (!std::isfinite(loss))
                throw TrainingDivergedError("training loss is not finite");
            model.w -= lr * grad;
        }
    }
}

}  // namespace bdfl
