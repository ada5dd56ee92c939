#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kean/matrix.hpp"
#include "kean/util.hpp"

namespace kean {

// Joint distribution of (predicted, true) on held-out source data.
// entry(i, j) = p(pred = i, true = j); column sums give the source prior.
struct ConfusionJoint {
    size_t k = 0;
    DenseMatrix joint;
};

inline ConfusionJoint confusion(const std::vector<size_t>& preds,
                                const std::vector<size_t>& labels, size_t k) {
    if (preds.size() != labels.size() || preds.empty())
        throw std::invalid_argument("confusion: need equal nonempty prediction/label sequences");
    ConfusionJoint c;
    c.k = k;
    c.joint = DenseMatrix(k, k);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= k || labels[i] >= k)
            throw std::invalid_argument("confusion: category out of range at row " +
                                        std::to_string(i));
        c.joint(preds[i], labels[i]) += 1.0;
    }
    scale_inplace(c.joint, 1.0 / static_cast<double>(preds.size()));
    return c;
}

// Empirical distribution of hard predictions on the target set.
inline std::vector<double> predict_q(const std::vector<size_t>& preds, size_t k) {
    if (preds.empty()) throw std::invalid_argument("predict_q: empty prediction sequence");
    std::vector<double> q(k, 0.0);
    for (size_t p : preds) {
        if (p >= k) throw std::invalid_argument("predict_q: category out of range");
        q[p] += 1.0;
    }
    for (double& v : q) v /= static_cast<double>(preds.size());
    return q;
}

namespace detail {

// Gaussian elimination with partial pivoting; returns false on a zero pivot.
inline bool gauss_solve(DenseMatrix a, std::vector<double> b, std::vector<double>& x) {
    size_t n = a.rows;
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::fabs(a(r, col)) > std::fabs(a(pivot, col))) pivot = r;
        if (a(pivot, col) == 0.0) return false;
        if (pivot != col) {
            for (size_t j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
            std::swap(b[col], b[pivot]);
        }
        for (size_t r = col + 1; r < n; ++r) {
            double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
            b[r] -= f * b[col];
        }
    }
    x.assign(n, 0.0);
    for (size_t ri = n; ri-- > 0;) {
        double s = b[ri];
        for (size_t j = ri + 1; j < n; ++j) s -= a(ri, j) * x[j];
        x[ri] = s / a(ri, ri);
    }
    return true;
}

inline bool invert(const DenseMatrix& a, DenseMatrix& inv) {
    size_t n = a.rows;
    inv = DenseMatrix(n, n);
    for (size_t col = 0; col < n; ++col) {
        std::vector<double> e(n, 0.0), x;
        e[col] = 1.0;
        if (!gauss_solve(a, e, x)) return false;
        for (size_t r = 0; r < n; ++r) inv(r, col) = x[r];
    }
    return true;
}

inline double norm1(const DenseMatrix& a) {
    double best = 0.0;
    for (size_t j = 0; j < a.cols; ++j) {
        double col = 0.0;
        for (size_t i = 0; i < a.rows; ++i) col += std::fabs(a(i, j));
        best = std::max(best, col);
    }
    return best;
}

}  // namespace detail

// w[y] estimates p_t(y) / p_s(y). raw keeps the unclipped solve for
// diagnostics; w clips negatives to zero.
struct ImportanceWeights {
    std::vector<double> w;
    std::vector<double> raw;
};

constexpr double kConditionLimit = 1e12;

// Solves (C + ridge I) w = q. A condition estimate above kConditionLimit
// means the source classifier barely separates some categories and no usable
// weights exist.
inline ImportanceWeights estimate_weights(const ConfusionJoint& c, const std::vector<double>& q,
                                          double ridge = 1e-6) {
    if (c.joint.rows != c.k || c.joint.cols != c.k)
        throw std::invalid_argument("estimate_weights: malformed confusion matrix");
    if (q.size() != c.k)
        throw std::invalid_argument("estimate_weights: q has " + std::to_string(q.size()) +
                                    " entries, expected " + std::to_string(c.k));
    if (ridge < 0.0) throw std::invalid_argument("estimate_weights: ridge must be >= 0");

    DenseMatrix a = c.joint;
    for (size_t i = 0; i < c.k; ++i) a(i, i) += ridge;

    auto reject = [&]() {
        throw std::runtime_error(
            "estimate_weights: confusion matrix is numerically singular (condition > 1e12); "
            "improve the source classifier so categories are distinguishable before "
            "estimating shift");
    };
    DenseMatrix inv;
    if (!detail::invert(a, inv)) reject();
    double cond = detail::norm1(a) * detail::norm1(inv);
    if (!(cond <= kConditionLimit)) reject();

    ImportanceWeights iw;
    if (!detail::gauss_solve(a, q, iw.raw)) reject();
    iw.w = iw.raw;
    for (double& v : iw.w)
        if (v < 0.0) v = 0.0;
    return iw;
}

// category<TAB>weight, one row per category.
inline void save_weights(const ImportanceWeights& iw, const std::vector<std::string>& names,
                         const std::string& path) {
    if (names.size() != iw.w.size())
        throw std::invalid_argument("save_weights: name count does not match weights");
    std::string out;
    for (size_t i = 0; i < iw.w.size(); ++i) {
        out += names[i];
        out += '\t';
        out += format_double(iw.w[i]);
        out += '\n';
    }
    write_file(path, out);
}

inline std::vector<std::pair<std::string, double>> load_weights(const std::string& path) {
    std::vector<std::pair<std::string, double>> out;
    std::vector<std::string> lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::vector<std::string> f = split_on(lines[i], '\t');
        if (f.size() != 2)
            throw std::runtime_error(path + ":" + std::to_string(i + 1) +
                                     ": expected category<TAB>weight");
        out.emplace_back(f[0], parse_double(f[1], path + ":" + std::to_string(i + 1)));
    }
    return out;
}

}  // namespace kean
