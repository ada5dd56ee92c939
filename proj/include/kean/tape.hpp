#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "kean/layers.hpp"
#include "kean/matrix.hpp"

namespace kean {

// A value flowing through a taped forward pass. node < 0 marks a constant that
// receives no gradient.
struct Tensor {
    DenseMatrix value;
    int node = -1;
};

// Reverse-mode tape. Forward ops allocate gradient slots and push backward
// closures; backward() runs the closures once, newest first, and then the tape
// is consumed. Parameter gradients accumulate into the LayerParams buffers,
// input gradients into the tape slots.
class GradTape {
public:
    int alloc(size_t rows, size_t cols) {
        grads_.emplace_back(rows, cols);
        return static_cast<int>(grads_.size()) - 1;
    }

    DenseMatrix& grad(int node) {
        if (node < 0 || node >= static_cast<int>(grads_.size()))
            throw std::invalid_argument("GradTape::grad: bad node");
        return grads_[static_cast<size_t>(node)];
    }

    void record(std::function<void(GradTape&)> step) { steps_.push_back(std::move(step)); }

    // Accumulate an upstream gradient into a tensor's slot.
    void seed(const Tensor& t, const DenseMatrix& g) {
        if (t.node < 0) throw std::invalid_argument("GradTape::seed: tensor is a constant");
        DenseMatrix& slot = grad(t.node);
        if (!slot.same_shape(g)) throw std::invalid_argument("GradTape::seed: shape mismatch");
        add_inplace(slot, g);
    }

    void backward() {
        if (consumed_) throw std::runtime_error("GradTape::backward: tape already consumed");
        consumed_ = true;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)(*this);
    }

    bool consumed() const { return consumed_; }

private:
    std::vector<DenseMatrix> grads_;
    std::vector<std::function<void(GradTape&)>> steps_;
    bool consumed_ = false;
};

// Leaf with a gradient slot (for gradient checks against inputs).
inline Tensor make_input(GradTape& tape, DenseMatrix v) {
    Tensor t;
    t.node = tape.alloc(v.rows, v.cols);
    t.value = std::move(v);
    return t;
}

inline Tensor make_constant(DenseMatrix v) {
    Tensor t;
    t.value = std::move(v);
    return t;
}

// activation(x W + b) with cached activations for the exact backward pass.
inline Tensor dense_forward(GradTape& tape, const Tensor& x, LayerParams& p) {
    if (x.value.cols != p.weight.rows)
        throw std::invalid_argument("dense_forward: x has " + std::to_string(x.value.cols) +
                                    " cols, layer expects " + std::to_string(p.weight.rows));
    DenseMatrix z = matmul(x.value, p.weight);
    for (size_t i = 0; i < z.rows; ++i)
        for (size_t j = 0; j < z.cols; ++j) z(i, j) += p.bias[j];
    apply_activation(z, p.activation);

    Tensor out;
    out.node = tape.alloc(z.rows, z.cols);
    out.value = z;

    int out_node = out.node;
    int x_node = x.node;
    DenseMatrix x_cached = x.value;
    DenseMatrix out_cached = out.value;
    LayerParams* params = &p;
    tape.record([out_node, x_node, x_cached, out_cached, params](GradTape& t) {
        const DenseMatrix& gy = t.grad(out_node);
        DenseMatrix gz = activation_backward(gy, out_cached, params->activation);
        // dW += x^T gz, db += column sums of gz
        DenseMatrix gw = matmul(transpose(x_cached), gz);
        add_inplace(params->weight_grad, gw);
        for (size_t i = 0; i < gz.rows; ++i)
            for (size_t j = 0; j < gz.cols; ++j) params->bias_grad[j] += gz(i, j);
        if (x_node >= 0) add_inplace(t.grad(x_node), matmul(gz, transpose(params->weight)));
    });
    return out;
}

// Gradient reversal: identity forward, upstream gradient scaled by -lambda on
// the way back. The recorded lambda is what turns one backward pass into the
// minimax update.
inline Tensor grl_forward(GradTape& tape, const Tensor& x, double lambda) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("grl_forward: lambda must be >= 0");
    Tensor out;
    out.node = tape.alloc(x.value.rows, x.value.cols);
    out.value = x.value;
    int out_node = out.node;
    int x_node = x.node;
    tape.record([out_node, x_node, lambda](GradTape& t) {
        if (x_node < 0) return;
        const DenseMatrix& gy = t.grad(out_node);
        DenseMatrix& gx = t.grad(x_node);
        for (size_t i = 0; i < gy.values.size(); ++i) gx.values[i] += -lambda * gy.values[i];
    });
    return out;
}

// [a ; b ; c] along columns, fixed order.
inline Tensor concat_cols(GradTape& tape, const Tensor& a, const Tensor& b, const Tensor& c) {
    if (a.value.rows != b.value.rows || a.value.rows != c.value.rows)
        throw std::invalid_argument("concat_cols: row counts differ");
    size_t rows = a.value.rows;
    size_t cols = a.value.cols + b.value.cols + c.value.cols;
    Tensor out;
    out.node = tape.alloc(rows, cols);
    out.value = DenseMatrix(rows, cols);
    for (size_t i = 0; i < rows; ++i) {
        size_t j = 0;
        for (size_t k = 0; k < a.value.cols; ++k) out.value(i, j++) = a.value(i, k);
        for (size_t k = 0; k < b.value.cols; ++k) out.value(i, j++) = b.value(i, k);
        for (size_t k = 0; k < c.value.cols; ++k) out.value(i, j++) = c.value(i, k);
    }
    int out_node = out.node;
    int na = a.node, nb = b.node, nc = c.node;
    size_t ca = a.value.cols, cb = b.value.cols, cc = c.value.cols;
    tape.record([out_node, na, nb, nc, ca, cb, cc](GradTape& t) {
        const DenseMatrix& gy = t.grad(out_node);
        for (size_t i = 0; i < gy.rows; ++i) {
            if (na >= 0)
                for (size_t k = 0; k < ca; ++k) t.grad(na)(i, k) += gy(i, k);
            if (nb >= 0)
                for (size_t k = 0; k < cb; ++k) t.grad(nb)(i, k) += gy(i, ca + k);
            if (nc >= 0)
                for (size_t k = 0; k < cc; ++k) t.grad(nc)(i, k) += gy(i, ca + cb + k);
        }
    });
    return out;
}

// Column window [begin, begin+len).
inline Tensor slice_cols(GradTape& tape, const Tensor& x, size_t begin, size_t len) {
    if (begin + len > x.value.cols) throw std::invalid_argument("slice_cols: out of range");
    Tensor out;
    out.node = tape.alloc(x.value.rows, len);
    out.value = DenseMatrix(x.value.rows, len);
    for (size_t i = 0; i < x.value.rows; ++i)
        for (size_t j = 0; j < len; ++j) out.value(i, j) = x.value(i, begin + j);
    int out_node = out.node;
    int x_node = x.node;
    tape.record([out_node, x_node, begin, len](GradTape& t) {
        if (x_node < 0) return;
        const DenseMatrix& gy = t.grad(out_node);
        DenseMatrix& gx = t.grad(x_node);
        for (size_t i = 0; i < gy.rows; ++i)
            for (size_t j = 0; j < len; ++j) gx(i, begin + j) += gy(i, j);
    });
    return out;
}

// Zero out whole rows where mask is 0; gradients are masked the same way.
// Missing-modality rows go through this, so their projected block is all zero.
inline Tensor mask_rows(GradTape& tape, const Tensor& x, const std::vector<uint8_t>& mask) {
    if (mask.size() != x.value.rows) throw std::invalid_argument("mask_rows: mask length mismatch");
    Tensor out;
    out.node = tape.alloc(x.value.rows, x.value.cols);
    out.value = x.value;
    for (size_t i = 0; i < x.value.rows; ++i)
        if (!mask[i])
            for (size_t j = 0; j < x.value.cols; ++j) out.value(i, j) = 0.0;
    int out_node = out.node;
    int x_node = x.node;
    std::vector<uint8_t> m = mask;
    tape.record([out_node, x_node, m](GradTape& t) {
        if (x_node < 0) return;
        const DenseMatrix& gy = t.grad(out_node);
        DenseMatrix& gx = t.grad(x_node);
        for (size_t i = 0; i < gy.rows; ++i)
            if (m[i])
                for (size_t j = 0; j < gy.cols; ++j) gx(i, j) += gy(i, j);
    });
    return out;
}

// Seed the output gradient and run the whole tape.
inline void backward(GradTape& tape, const Tensor& out, const DenseMatrix& loss_grad) {
    tape.seed(out, loss_grad);
    tape.backward();
}

}  // namespace kean
