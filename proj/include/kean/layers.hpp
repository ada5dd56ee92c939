#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "kean/matrix.hpp"
#include "kean/rng.hpp"

namespace kean {

enum class Activation { identity, relu, tanh, sigmoid, softmax };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "softmax") return Activation::softmax;
    throw std::runtime_error("unknown activation: " + s);
}

// One fully connected layer: activation(x W + b). Gradient buffers live next
// to the parameters; backward() accumulates into them.
struct LayerParams {
    DenseMatrix weight;        // in_dim x out_dim
    std::vector<double> bias;  // out_dim
    Activation activation = Activation::identity;

    DenseMatrix weight_grad;
    std::vector<double> bias_grad;

    LayerParams() = default;
    LayerParams(size_t in_dim, size_t out_dim, Activation act)
        : weight(in_dim, out_dim),
          bias(out_dim, 0.0),
          activation(act),
          weight_grad(in_dim, out_dim),
          bias_grad(out_dim, 0.0) {}

    size_t in_dim() const { return weight.rows; }
    size_t out_dim() const { return weight.cols; }

    void zero_grads() {
        std::fill(weight_grad.values.begin(), weight_grad.values.end(), 0.0);
        std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
    }
};

// Glorot uniform: +-sqrt(6 / (fan_in + fan_out)).
inline LayerParams init_layer(size_t in_dim, size_t out_dim, Activation act, Rng& rng) {
    LayerParams p(in_dim, out_dim, act);
    double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (double& w : p.weight.values) w = rng.uniform(-bound, bound);
    return p;
}

// activation applied in place, row by row for softmax
inline void apply_activation(DenseMatrix& z, Activation act) {
    switch (act) {
        case Activation::identity:
            return;
        case Activation::relu:
            for (double& v : z.values) v = v > 0.0 ? v : 0.0;
            return;
        case Activation::tanh:
            for (double& v : z.values) v = std::tanh(v);
            return;
        case Activation::sigmoid:
            for (double& v : z.values) v = 1.0 / (1.0 + std::exp(-v));
            return;
        case Activation::softmax:
            for (size_t i = 0; i < z.rows; ++i) {
                double mx = z(i, 0);
                for (size_t j = 1; j < z.cols; ++j) mx = std::max(mx, z(i, j));
                double sum = 0.0;
                for (size_t j = 0; j < z.cols; ++j) {
                    double e = std::exp(z(i, j) - mx);
                    z(i, j) = e;
                    sum += e;
                }
                for (size_t j = 0; j < z.cols; ++j) z(i, j) /= sum;
            }
            return;
    }
}

// Given grad wrt the activation output and the cached output, produce grad wrt
// the pre-activation. relu uses out > 0 (equivalent to z > 0, with relu'(0)=0).
inline DenseMatrix activation_backward(const DenseMatrix& grad_out, const DenseMatrix& out,
                                       Activation act) {
    DenseMatrix gz = grad_out;
    switch (act) {
        case Activation::identity:
            return gz;
        case Activation::relu:
            for (size_t i = 0; i < gz.values.size(); ++i)
                if (out.values[i] <= 0.0) gz.values[i] = 0.0;
            return gz;
        case Activation::tanh:
            for (size_t i = 0; i < gz.values.size(); ++i)
                gz.values[i] *= 1.0 - out.values[i] * out.values[i];
            return gz;
        case Activation::sigmoid:
            for (size_t i = 0; i < gz.values.size(); ++i)
                gz.values[i] *= out.values[i] * (1.0 - out.values[i]);
            return gz;
        case Activation::softmax:
            // dz_i = s_i * (g_i - sum_j g_j s_j), per row
            for (size_t r = 0; r < gz.rows; ++r) {
                double inner = 0.0;
                for (size_t j = 0; j < gz.cols; ++j) inner += grad_out(r, j) * out(r, j);
                for (size_t j = 0; j < gz.cols; ++j)
                    gz(r, j) = out(r, j) * (grad_out(r, j) - inner);
            }
            return gz;
    }
    return gz;
}

}  // namespace kean
