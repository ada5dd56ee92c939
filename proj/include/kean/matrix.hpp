#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace kean {

// Row-major dense matrix of 64-bit reals. Every activation batch in the model
// is one of these, one row per sample.
struct DenseMatrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> values;

    DenseMatrix() = default;
    DenseMatrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(size_t i, size_t j) { return values[i * cols + j]; }
    double operator()(size_t i, size_t j) const { return values[i * cols + j]; }

    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_finite(const std::string& what) const {
        if (!all_finite()) throw std::runtime_error(what + ": non-finite entry");
    }

    std::vector<double> row(size_t i) const {
        return std::vector<double>(values.begin() + static_cast<long>(i * cols),
                                   values.begin() + static_cast<long>((i + 1) * cols));
    }

    void set_row(size_t i, const std::vector<double>& v) {
        if (v.size() != cols) throw std::invalid_argument("set_row: length mismatch");
        for (size_t j = 0; j < cols; ++j) (*this)(i, j) = v[j];
    }
};

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: shape mismatch " + std::to_string(a.rows) + "x" +
                                    std::to_string(a.cols) + " * " + std::to_string(b.rows) + "x" +
                                    std::to_string(b.cols));
    DenseMatrix out(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.values[k * b.cols];
            double* orow = &out.values[i * out.cols];
            for (size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix out(a.cols, a.rows);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

inline void add_inplace(DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add_inplace: shape mismatch");
    for (size_t i = 0; i < a.values.size(); ++i) a.values[i] += b.values[i];
}

inline void scale_inplace(DenseMatrix& a, double s) {
    for (double& v : a.values) v *= s;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace kean
