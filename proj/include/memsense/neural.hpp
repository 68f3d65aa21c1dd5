#pragma once

// Dense feed-forward networks with hand-written reverse-mode gradients.
// Batches are stored column-wise: one sample per column.

#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "memsense/random.hpp"

namespace memsense::nn {

enum class Activation { relu, sigmoid, identity };

[[nodiscard]] inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
    }
    return "?";
}

[[nodiscard]] inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseLayer {
    Matrix<Scalar> weight;  // out x in
    Vector<Scalar> bias;    // out
    Activation activation = Activation::identity;
};

template <typename Scalar>
struct Mlp {
    std::vector<DenseLayer<Scalar>> layers;

    [[nodiscard]] Eigen::Index input_dim() const { return layers.front().weight.cols(); }
    [[nodiscard]] Eigen::Index output_dim() const { return layers.back().weight.rows(); }

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("Mlp: no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].bias.size() != layers[l].weight.rows())
                throw std::invalid_argument("Mlp: bias/weight mismatch in layer " + std::to_string(l));
            if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows())
                throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " does not chain");
        }
    }
};

/// Layer widths including the input, plus hidden and output activations.
struct LayerSpec {
    std::vector<int> widths;
    Activation hidden = Activation::relu;
    Activation output = Activation::identity;
};

template <typename Scalar>
struct ForwardTrace {
    Matrix<Scalar> input;
    std::vector<Matrix<Scalar>> pre;   // affine outputs per layer
    std::vector<Matrix<Scalar>> post;  // activations per layer

    [[nodiscard]] const Matrix<Scalar>& output() const { return post.back(); }
};

template <typename Scalar>
struct Gradients {
    std::vector<Matrix<Scalar>> weight;
    std::vector<Vector<Scalar>> bias;
    Matrix<Scalar> input;
};

namespace detail {
template <typename Derived>
auto activate(const Eigen::MatrixBase<Derived>& z, Activation a) {
    using Scalar = typename Derived::Scalar;
    using M = Matrix<Scalar>;
    switch (a) {
        case Activation::relu: return M(z.cwiseMax(Scalar(0)));
        case Activation::sigmoid: return M((Scalar(1) + (-z.array()).exp()).inverse().matrix());
        case Activation::identity: break;
    }
    return M(z);
}
}  // namespace detail

template <typename Scalar>
[[nodiscard]] ForwardTrace<Scalar> forward(const Mlp<Scalar>& net, const std::type_identity_t<Matrix<Scalar>>& input) {
    if (input.rows() != net.input_dim())
        throw std::invalid_argument("forward: input has " + std::to_string(input.rows()) + " rows, network expects " +
                                    std::to_string(net.input_dim()));
    ForwardTrace<Scalar> trace;
    trace.input = input;
    trace.pre.reserve(net.layers.size());
    trace.post.reserve(net.layers.size());
    const Matrix<Scalar>* x = &trace.input;
    for (const auto& layer : net.layers) {
        trace.pre.emplace_back((layer.weight * *x).colwise() + layer.bias);
        trace.post.emplace_back(detail::activate(trace.pre.back(), layer.activation));
        x = &trace.post.back();
    }
    return trace;
}

/// Single-sample convenience.
template <typename Scalar>
[[nodiscard]] Vector<Scalar> predict(const Mlp<Scalar>& net, const std::type_identity_t<Vector<Scalar>>& input) {
    return forward(net, Matrix<Scalar>(input)).output().col(0);
}

/// Reverse pass for an objective whose gradient wrt the output batch is
/// `output_grad`. Parameter gradients are summed over the batch. With
/// `want_params = false` only the input gradient is produced.
template <typename Scalar>
[[nodiscard]] Gradients<Scalar> backward(const Mlp<Scalar>& net, const ForwardTrace<Scalar>& trace,
                                         const std::type_identity_t<Matrix<Scalar>>& output_grad,
                                         bool want_params = true) {
    const std::size_t n = net.layers.size();
    if (trace.pre.size() != n || output_grad.rows() != net.output_dim() ||
        output_grad.cols() != trace.output().cols())
        throw std::invalid_argument("backward: gradient/trace shape mismatch");
    Gradients<Scalar> g;
    if (want_params) {
        g.weight.resize(n);
        g.bias.resize(n);
    }
    Matrix<Scalar> delta = output_grad;
    for (std::size_t l = n; l-- > 0;) {
        const auto& layer = net.layers[l];
        switch (layer.activation) {
            case Activation::relu:
                delta = (trace.pre[l].array() > Scalar(0)).select(delta, Scalar(0));
                break;
            case Activation::sigmoid:
                delta.array() *= trace.post[l].array() * (Scalar(1) - trace.post[l].array());
                break;
            case Activation::identity: break;
        }
        const Matrix<Scalar>& below = l == 0 ? trace.input : trace.post[l - 1];
        if (want_params) {
            g.weight[l].noalias() = delta * below.transpose();
            g.bias[l] = delta.rowwise().sum();
        }
        Matrix<Scalar> next = layer.weight.transpose() * delta;
        delta.swap(next);
    }
    g.input = std::move(delta);
    return g;
}

template <typename Scalar, typename Engine>
[[nodiscard]] Mlp<Scalar> init_params(const LayerSpec& spec, Engine& rng) {
    if (spec.widths.size() < 2) throw std::invalid_argument("init_params: need input and output widths");
    for (int w : spec.widths)
        if (w < 1) throw std::invalid_argument("init_params: widths must be positive");
    Mlp<Scalar> net;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        const int in = spec.widths[l];
        const int out = spec.widths[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        DenseLayer<Scalar> layer;
        layer.weight.resize(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c)
                layer.weight(r, c) = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound);
        layer.bias = Vector<Scalar>::Zero(out);
        layer.activation = l + 2 == spec.widths.size() ? spec.output : spec.hidden;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

enum class OptimizerKind { sgd, adam };

template <typename Scalar>
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    std::vector<Matrix<Scalar>> m_weight, v_weight;
    std::vector<Vector<Scalar>> m_bias, v_bias;
};

template <typename Scalar>
[[nodiscard]] OptimizerState<Scalar> make_optimizer(const Mlp<Scalar>& net, OptimizerKind kind) {
    OptimizerState<Scalar> st;
    st.kind = kind;
    if (kind == OptimizerKind::adam) {
        for (const auto& layer : net.layers) {
            st.m_weight.push_back(Matrix<Scalar>::Zero(layer.weight.rows(), layer.weight.cols()));
            st.v_weight.push_back(Matrix<Scalar>::Zero(layer.weight.rows(), layer.weight.cols()));
            st.m_bias.push_back(Vector<Scalar>::Zero(layer.bias.size()));
            st.v_bias.push_back(Vector<Scalar>::Zero(layer.bias.size()));
        }
    }
    return st;
}

/// Descent step: parameters move against `grads`. Callers maximizing an
/// objective pass the negated gradient.
template <typename Scalar>
void apply_update(Mlp<Scalar>& net, const Gradients<Scalar>& grads, double step_size, OptimizerState<Scalar>& st) {
    if (grads.weight.size() != net.layers.size() || grads.bias.size() != net.layers.size())
        throw std::invalid_argument("apply_update: gradient shape mismatch");
    const auto lr = static_cast<Scalar>(step_size);
    if (st.kind == OptimizerKind::sgd) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            net.layers[l].weight.noalias() -= lr * grads.weight[l];
            net.layers[l].bias.noalias() -= lr * grads.bias[l];
        }
        return;
    }
    ++st.step;
    const auto b1 = static_cast<Scalar>(st.beta1);
    const auto b2 = static_cast<Scalar>(st.beta2);
    const auto eps = static_cast<Scalar>(st.epsilon);
    const auto c1 = static_cast<Scalar>(1.0 - std::pow(st.beta1, static_cast<double>(st.step)));
    const auto c2 = static_cast<Scalar>(1.0 - std::pow(st.beta2, static_cast<double>(st.step)));
    auto adam = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * grad;
        v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        adam(net.layers[l].weight, grads.weight[l], st.m_weight[l], st.v_weight[l]);
        adam(net.layers[l].bias, grads.bias[l], st.m_bias[l], st.v_bias[l]);
    }
}

/// target <- tau * online + (1 - tau) * target
template <typename Scalar>
void blend_into(Mlp<Scalar>& target, const Mlp<Scalar>& online, double tau) {
    const auto t = static_cast<Scalar>(tau);
    for (std::size_t l = 0; l < target.layers.size(); ++l) {
        target.layers[l].weight = t * online.layers[l].weight + (Scalar(1) - t) * target.layers[l].weight;
        target.layers[l].bias = t * online.layers[l].bias + (Scalar(1) - t) * target.layers[l].bias;
    }
}

// Text persistence. Header: "memsense-mlp <version> <layers> <input> <out>:<act> ...",
// then per layer one line per weight row followed by one bias line.

inline constexpr int kFormatVersion = 1;

template <typename Scalar>
void save(const Mlp<Scalar>& net, std::ostream& out) {
    out << "memsense-mlp " << kFormatVersion << ' ' << net.layers.size() << ' ' << net.input_dim();
    for (const auto& layer : net.layers) out << ' ' << layer.weight.rows() << ':' << to_string(layer.activation);
    out << '\n';
    const auto old_precision = out.precision(17);
    auto row = [&](auto&& values, Eigen::Index count) {
        for (Eigen::Index i = 0; i < count; ++i) {
            if (i) out << ' ';
            out << static_cast<double>(values(i));
        }
        out << '\n';
    };
    for (const auto& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) row(layer.weight.row(r), layer.weight.cols());
        row(layer.bias, layer.bias.size());
    }
    out.precision(old_precision);
}

template <typename Scalar>
[[nodiscard]] Mlp<Scalar> load(std::istream& in) {
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    Eigen::Index width = 0;
    if (!(in >> magic >> version >> count >> width) || magic != "memsense-mlp")
        throw std::runtime_error("load: not a memsense-mlp stream");
    if (version != kFormatVersion) throw std::runtime_error("load: unsupported format version " + std::to_string(version));
    Mlp<Scalar> net;
    for (std::size_t l = 0; l < count; ++l) {
        std::string tag;
        if (!(in >> tag)) throw std::runtime_error("load: truncated header");
        const auto colon = tag.find(':');
        if (colon == std::string::npos) throw std::runtime_error("load: malformed layer tag '" + tag + "'");
        DenseLayer<Scalar> layer;
        const Eigen::Index out = std::stol(tag.substr(0, colon));
        layer.activation = parse_activation(tag.substr(colon + 1));
        layer.weight.resize(out, width);
        layer.bias.resize(out);
        net.layers.push_back(std::move(layer));
        width = out;
    }
    auto read = [&](Scalar& v) {
        double d = 0.0;
        if (!(in >> d)) throw std::runtime_error("load: truncated parameter block");
        v = static_cast<Scalar>(d);
    };
    for (auto& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) read(layer.weight(r, c));
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) read(layer.bias(r));
    }
    net.validate();
    return net;
}

}  // namespace memsense::nn
