#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace kean {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any log.
constexpr double kProbEps = 1e-7;

inline double clamp_prob(double p) {
    if (p < kProbEps) return kProbEps;
    if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
    return p;
}

// -y log(p) - (1-y) log(1-p)
inline double bce_loss(int y, double y_hat) {
    if (y != 0 && y != 1) throw std::invalid_argument("bce_loss: y must be 0 or 1");
    if (!std::isfinite(y_hat)) throw std::invalid_argument("bce_loss: non-finite prediction");
    double p = clamp_prob(y_hat);
    return y == 1 ? -std::log(p) : -std::log(1.0 - p);
}

// d bce / d y_hat at the clamped point
inline double bce_grad(int y, double y_hat) {
    if (y != 0 && y != 1) throw std::invalid_argument("bce_grad: y must be 0 or 1");
    if (!std::isfinite(y_hat)) throw std::invalid_argument("bce_grad: non-finite prediction");
    double p = clamp_prob(y_hat);
    return y == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

inline void check_simplex(const std::vector<double>& y_hat) {
    double sum = 0.0;
    for (double v : y_hat) {
        if (!std::isfinite(v)) throw std::invalid_argument("cross_entropy: non-finite probability");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("cross_entropy: probabilities sum to " + std::to_string(sum));
}

// -sum_i y_i log(p_i), y one-hot
inline double cross_entropy(const std::vector<double>& y_onehot, const std::vector<double>& y_hat) {
    if (y_onehot.size() != y_hat.size())
        throw std::invalid_argument("cross_entropy: length mismatch");
    check_simplex(y_hat);
    int ones = 0;
    size_t hot = 0;
    for (size_t i = 0; i < y_onehot.size(); ++i) {
        if (y_onehot[i] == 1.0) {
            ++ones;
            hot = i;
        } else if (y_onehot[i] != 0.0) {
            throw std::invalid_argument("cross_entropy: y is not one-hot");
        }
    }
    if (ones != 1) throw std::invalid_argument("cross_entropy: y is not one-hot");
    return -std::log(clamp_prob(y_hat[hot]));
}

// gradient wrt y_hat: -y_i / p_i at the clamped point, zero elsewhere
inline std::vector<double> cross_entropy_grad(const std::vector<double>& y_onehot,
                                              const std::vector<double>& y_hat) {
    if (y_onehot.size() != y_hat.size())
        throw std::invalid_argument("cross_entropy_grad: length mismatch");
    std::vector<double> g(y_hat.size(), 0.0);
    for (size_t i = 0; i < y_hat.size(); ++i)
        if (y_onehot[i] == 1.0) g[i] = -1.0 / clamp_prob(y_hat[i]);
    return g;
}

// index-based convenience used by the training loop
inline double cross_entropy_at(size_t label, const std::vector<double>& y_hat) {
    if (label >= y_hat.size()) throw std::invalid_argument("cross_entropy_at: label out of range");
    check_simplex(y_hat);
    return -std::log(clamp_prob(y_hat[label]));
}

}  // namespace kean
