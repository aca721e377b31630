#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "asfs/errors.hpp"
#include "asfs/matrix.hpp"
#include "asfs/rng.hpp"

namespace asfs {

enum class Activation { Identity, Sigmoid, Tanh, Relu, Softmax };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Softmax: return "softmax";
    }
    return "unknown";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "softmax") return Activation::Softmax;
    throw ValueError("unknown activation: " + s);
}

namespace detail {

inline void apply_activation(Matrix& z, Activation act) {
    switch (act) {
        case Activation::Identity:
            break;
        case Activation::Sigmoid:
            for (double& v : z.data) v = 1.0 / (1.0 + std::exp(-v));
            break;
        case Activation::Tanh:
            for (double& v : z.data) v = std::tanh(v);
            break;
        case Activation::Relu:
            for (double& v : z.data) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::Softmax:
            for (std::size_t i = 0; i < z.rows; ++i) {
                double mx = z(i, 0);
                for (std::size_t j = 1; j < z.cols; ++j) mx = std::max(mx, z(i, j));
                double sum = 0.0;
                for (std::size_t j = 0; j < z.cols; ++j) {
                    const double e = std::exp(z(i, j) - mx);
                    z(i, j) = e;
                    sum += e;
                }
                for (std::size_t j = 0; j < z.cols; ++j) z(i, j) /= sum;
            }
            break;
    }
}

// dZ from upstream dA and the post-activation output A.
inline Matrix activation_backward(const Matrix& a, const Matrix& da, Activation act) {
    Matrix dz(a.rows, a.cols);
    switch (act) {
        case Activation::Identity:
            dz = da;
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < a.size(); ++i)
                dz.data[i] = da.data[i] * a.data[i] * (1.0 - a.data[i]);
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < a.size(); ++i)
                dz.data[i] = da.data[i] * (1.0 - a.data[i] * a.data[i]);
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < a.size(); ++i)
                dz.data[i] = a.data[i] > 0.0 ? da.data[i] : 0.0;
            break;
        case Activation::Softmax:
            // Full per-row Jacobian: dz_j = a_j * (da_j - sum_k da_k a_k)
            for (std::size_t i = 0; i < a.rows; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < a.cols; ++j) dot += da(i, j) * a(i, j);
                for (std::size_t j = 0; j < a.cols; ++j)
                    dz(i, j) = a(i, j) * (da(i, j) - dot);
            }
            break;
    }
    return dz;
}

} // namespace detail

// Fully-connected layer, weights stored out x in.
struct DenseLayer {
    Matrix weights;            // out x in
    std::vector<double> bias;  // out
    Activation activation = Activation::Identity;

    std::size_t in_dim() const { return weights.cols; }
    std::size_t out_dim() const { return weights.rows; }

    // Glorot-style uniform init, seeded. Logistic sigmoid gets the 4x gain
    // from the original derivation; its derivative tops out at 1/4, and
    // unit-gain weights leave deep sigmoid stacks on a flat plateau.
    static DenseLayer init(std::size_t in, std::size_t out, Activation act, Rng& rng) {
        DenseLayer l;
        l.weights = Matrix(out, in);
        l.bias.assign(out, 0.0);
        l.activation = act;
        const double gain = act == Activation::Sigmoid ? 4.0 : 1.0;
        const double bound = gain * std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& w : l.weights.data) w = rng.uniform(-bound, bound);
        return l;
    }
};

struct LayerGrads {
    Matrix dweights;
    std::vector<double> dbias;
};

// output = activation(input * W^T + b), row-wise.
inline Matrix dense_forward(const DenseLayer& layer, const Matrix& input) {
    if (input.cols != layer.in_dim())
        throw DimensionError("dense_forward: input cols " + std::to_string(input.cols) +
                             " != layer in-dim " + std::to_string(layer.in_dim()));
    Matrix z = matmul_nt(input, layer.weights);
    for (std::size_t i = 0; i < z.rows; ++i)
        for (std::size_t j = 0; j < z.cols; ++j) z(i, j) += layer.bias[j];
    detail::apply_activation(z, layer.activation);
    return z;
}

// Gradients of a scalar loss w.r.t. weights, bias and input, given the
// upstream gradient w.r.t. this layer's output. `output` is the cached
// forward result for the same input.
inline std::pair<LayerGrads, Matrix> dense_backward(const DenseLayer& layer, const Matrix& input,
                                                    const Matrix& output, const Matrix& upstream) {
    if (input.cols != layer.in_dim() || upstream.cols != layer.out_dim() ||
        input.rows != upstream.rows)
        throw DimensionError("dense_backward: inconsistent shapes");
    const Matrix dz = detail::activation_backward(output, upstream, layer.activation);
    LayerGrads g;
    g.dweights = matmul_tn(dz, input);  // out x in
    g.dbias.assign(layer.out_dim(), 0.0);
    for (std::size_t i = 0; i < dz.rows; ++i)
        for (std::size_t j = 0; j < dz.cols; ++j) g.dbias[j] += dz(i, j);
    Matrix dinput = matmul(dz, layer.weights);  // B x in
    return {std::move(g), std::move(dinput)};
}

inline std::pair<LayerGrads, Matrix> dense_backward(const DenseLayer& layer, const Matrix& input,
                                                    const Matrix& upstream) {
    return dense_backward(layer, input, dense_forward(layer, input), upstream);
}

// ---- Losses. Each returns (scalar, gradient w.r.t. the prediction). ----

// Mean over features per sample, averaged over the batch.
inline std::pair<double, Matrix> loss_mse(const Matrix& pred, const Matrix& target) {
    require_same_shape(pred, target, "loss_mse");
    const double n = static_cast<double>(pred.size());
    double loss = 0.0;
    Matrix grad(pred.rows, pred.cols);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred.data[i] - target.data[i];
        loss += diff * diff;
        grad.data[i] = 2.0 * diff / n;
    }
    return {loss / n, std::move(grad)};
}

constexpr double kBceClamp = 1e-7;

// Binary cross-entropy, per-feature mean, batch-averaged. Predictions are
// clamped to [1e-7, 1-1e-7] before the log.
inline std::pair<double, Matrix> loss_bce(const Matrix& pred, const Matrix& target) {
    require_same_shape(pred, target, "loss_bce");
    for (double t : target.data)
        if (t != 0.0 && t != 1.0) throw ValueError("loss_bce: target entries must be 0 or 1");
    const double n = static_cast<double>(pred.size());
    double loss = 0.0;
    Matrix grad(pred.rows, pred.cols);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(pred.data[i], kBceClamp, 1.0 - kBceClamp);
        const double t = target.data[i];
        loss += -t * std::log(p) - (1.0 - t) * std::log(1.0 - p);
        grad.data[i] = (-t / p + (1.0 - t) / (1.0 - p)) / n;
    }
    return {loss / n, std::move(grad)};
}

// Softmax cross-entropy over logits; grad = (softmax - onehot) / batch.
inline std::pair<double, Matrix> loss_categorical_ce(const Matrix& logits,
                                                     const std::vector<int>& labels) {
    if (labels.size() != logits.rows)
        throw DimensionError("loss_categorical_ce: label count != batch size");
    const double b = static_cast<double>(logits.rows);
    Matrix probs = logits;
    detail::apply_activation(probs, Activation::Softmax);
    double loss = 0.0;
    Matrix grad = probs;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
            throw ValueError("loss_categorical_ce: label " + std::to_string(y) +
                             " out of range for " + std::to_string(logits.cols) + " classes");
        loss += -std::log(std::max(probs(i, static_cast<std::size_t>(y)), 1e-300));
        grad(i, static_cast<std::size_t>(y)) -= 1.0;
    }
    for (double& v : grad.data) v /= b;
    return {loss / b, std::move(grad)};
}

// ---- Optimizers ----

enum class OptimizerKind { RMSprop, Adam };

// Flat views over a model's parameter tensors; accumulator slots mirror the
// view list and are allocated on the first step.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double rms_decay = 0.9;
    double rms_momentum = 0.9;  // Graves-style velocity on the rescaled step
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    std::vector<std::vector<double>> m;  // second moment for RMSprop, first for Adam
    std::vector<std::vector<double>> v;  // step velocity for RMSprop, second moment for Adam

    static OptimizerState rmsprop(double lr) {
        OptimizerState s;
        s.kind = OptimizerKind::RMSprop;
        s.learning_rate = lr;
        return s;
    }
    static OptimizerState adam(double lr) {
        OptimizerState s;
        s.kind = OptimizerKind::Adam;
        s.learning_rate = lr;
        return s;
    }
};

inline void optimizer_step(OptimizerState& state, const std::vector<std::span<double>>& params,
                           const std::vector<std::span<const double>>& grads) {
    if (state.learning_rate <= 0.0) throw ValueError("optimizer_step: learning_rate must be > 0");
    if (params.size() != grads.size())
        throw DimensionError("optimizer_step: param/grad tensor counts differ");
    if (state.m.empty()) {
        for (const auto& p : params) state.m.emplace_back(p.size(), 0.0);
        for (const auto& p : params) state.v.emplace_back(p.size(), 0.0);
    }
    if (state.m.size() != params.size())
        throw DimensionError("optimizer_step: accumulator count mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size() || params[t].size() != state.m[t].size())
            throw DimensionError("optimizer_step: tensor " + std::to_string(t) + " shape mismatch");
        for (double g : grads[t])
            if (!std::isfinite(g))
                throw NumericalError("optimizer_step: non-finite gradient in tensor " +
                                     std::to_string(t));
    }
    ++state.step_count;
    if (state.kind == OptimizerKind::RMSprop) {
        for (std::size_t t = 0; t < params.size(); ++t) {
            auto& acc = state.m[t];
            auto& vel = state.v[t];
            for (std::size_t i = 0; i < params[t].size(); ++i) {
                const double g = grads[t][i];
                acc[i] = state.rms_decay * acc[i] + (1.0 - state.rms_decay) * g * g;
                const double step = state.learning_rate * g / (std::sqrt(acc[i]) + state.epsilon);
                vel[i] = state.rms_momentum * vel[i] + step;
                params[t][i] -= vel[i];
            }
        }
    } else {
        const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
        const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
        for (std::size_t t = 0; t < params.size(); ++t) {
            auto& m = state.m[t];
            auto& v = state.v[t];
            for (std::size_t i = 0; i < params[t].size(); ++i) {
                const double g = grads[t][i];
                m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
                v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                params[t][i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
            }
        }
    }
}

// ---- Small sequential network ----

struct Mlp {
    std::vector<DenseLayer> layers;

    struct Grads {
        std::vector<LayerGrads> layers;
        Matrix dinput;
    };

    static Mlp make(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts,
                    Rng& rng) {
        if (dims.size() < 2 || acts.size() != dims.size() - 1)
            throw ValueError("Mlp::make: need n dims and n-1 activations");
        Mlp net;
        for (std::size_t i = 0; i + 1 < dims.size(); ++i)
            net.layers.push_back(DenseLayer::init(dims[i], dims[i + 1], acts[i], rng));
        return net;
    }

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }

    // Returns [input, a1, ..., output]; acts[k] is the input to layer k.
    std::vector<Matrix> forward_all(const Matrix& x) const {
        std::vector<Matrix> acts;
        acts.reserve(layers.size() + 1);
        acts.push_back(x);
        for (const auto& l : layers) acts.push_back(dense_forward(l, acts.back()));
        return acts;
    }

    Matrix forward(const Matrix& x) const {
        Matrix a = x;
        for (const auto& l : layers) a = dense_forward(l, a);
        return a;
    }

    Grads backward(const std::vector<Matrix>& acts, const Matrix& dout) const {
        Grads g;
        g.layers.resize(layers.size());
        Matrix upstream = dout;
        for (std::size_t k = layers.size(); k-- > 0;) {
            auto [lg, dinput] = dense_backward(layers[k], acts[k], acts[k + 1], upstream);
            g.layers[k] = std::move(lg);
            upstream = std::move(dinput);
        }
        g.dinput = std::move(upstream);
        return g;
    }

    std::vector<std::span<double>> param_views() {
        std::vector<std::span<double>> views;
        for (auto& l : layers) {
            views.emplace_back(l.weights.data);
            views.emplace_back(l.bias);
        }
        return views;
    }

    static std::vector<std::span<const double>> grad_views(const Grads& g) {
        std::vector<std::span<const double>> views;
        for (const auto& lg : g.layers) {
            views.emplace_back(lg.dweights.data);
            views.emplace_back(lg.dbias);
        }
        return views;
    }
};

} // namespace asfs
