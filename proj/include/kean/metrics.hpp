#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "kean/matrix.hpp"

namespace kean {

// Per-category precision/recall/F1 with the zero-denominator-gives-zero
// convention, macro means over all k categories, and support-weighted F1.
// Confusion rows are true categories, columns predicted.
struct MetricsReport {
    size_t categories = 0;
    size_t total = 0;
    double accuracy = 0.0;
    std::vector<double> precision, recall, f1;
    std::vector<size_t> support;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_f1 = 0.0;
    DenseMatrix confusion;  // counts, rows = true, cols = predicted
};

inline MetricsReport compute_metrics(const std::vector<size_t>& preds,
                                     const std::vector<size_t>& labels, size_t k) {
    if (preds.size() != labels.size())
        throw std::invalid_argument("compute_metrics: " + std::to_string(preds.size()) +
                                    " predictions vs " + std::to_string(labels.size()) +
                                    " labels");
    if (preds.empty()) throw std::invalid_argument("compute_metrics: empty input");
    if (k < 2) throw std::invalid_argument("compute_metrics: need at least 2 categories");

    MetricsReport r;
    r.categories = k;
    r.total = preds.size();
    r.confusion = DenseMatrix(k, k);
    size_t correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= k || labels[i] >= k)
            throw std::invalid_argument("compute_metrics: category out of range at row " +
                                        std::to_string(i));
        r.confusion(labels[i], preds[i]) += 1.0;
        if (preds[i] == labels[i]) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);

    r.precision.assign(k, 0.0);
    r.recall.assign(k, 0.0);
    r.f1.assign(k, 0.0);
    r.support.assign(k, 0);
    for (size_t c = 0; c < k; ++c) {
        double tp = r.confusion(c, c);
        double pred_c = 0.0, true_c = 0.0;
        for (size_t j = 0; j < k; ++j) {
            pred_c += r.confusion(j, c);
            true_c += r.confusion(c, j);
        }
        r.support[c] = static_cast<size_t>(true_c);
        r.precision[c] = pred_c > 0.0 ? tp / pred_c : 0.0;
        r.recall[c] = true_c > 0.0 ? tp / true_c : 0.0;
        double pr = r.precision[c] + r.recall[c];
        r.f1[c] = pr > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / pr : 0.0;
        r.macro_precision += r.precision[c];
        r.macro_recall += r.recall[c];
        r.macro_f1 += r.f1[c];
        r.weighted_f1 += true_c * r.f1[c];
    }
    r.macro_precision /= static_cast<double>(k);
    r.macro_recall /= static_cast<double>(k);
    r.macro_f1 /= static_cast<double>(k);
    r.weighted_f1 /= static_cast<double>(r.total);
    return r;
}

}  // namespace kean
