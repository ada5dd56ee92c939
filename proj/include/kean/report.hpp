#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "kean/data.hpp"
#include "kean/metrics.hpp"
#include "kean/tasks.hpp"
#include "kean/util.hpp"
#include "json.hpp"

namespace kean {

// Keeps a numeric token readable as a real number: "1" becomes "1.0".
inline std::string ensure_decimal(std::string s) {
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("nan") == std::string::npos && s.find("inf") == std::string::npos)
        s += ".0";
    return s;
}

// Category display names for a report: binary tasks use the two binary label
// tokens, six-way tasks the fine label tokens, anything else c0, c1, ...
inline std::vector<std::string> category_names(size_t k) {
    if (k == binary_label_tokens().size()) return binary_label_tokens();
    if (k == fine_label_tokens().size()) return fine_label_tokens();
    std::vector<std::string> names;
    for (size_t c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
    return names;
}

inline nlohmann::json metrics_to_json(const MetricsReport& m,
                                      const std::vector<std::string>& names) {
    nlohmann::json j;
    j["total"] = m.total;
    j["accuracy"] = m.accuracy;
    j["macro_precision"] = m.macro_precision;
    j["macro_recall"] = m.macro_recall;
    j["macro_f1"] = m.macro_f1;
    j["weighted_f1"] = m.weighted_f1;
    nlohmann::json cats = nlohmann::json::array();
    for (size_t c = 0; c < m.categories; ++c) {
        nlohmann::json e;
        e["name"] = c < names.size() ? names[c] : "c" + std::to_string(c);
        e["precision"] = m.precision[c];
        e["recall"] = m.recall[c];
        e["f1"] = m.f1[c];
        e["support"] = m.support[c];
        cats.push_back(e);
    }
    j["categories"] = cats;
    nlohmann::json conf = nlohmann::json::array();
    for (size_t i = 0; i < m.confusion.rows; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (size_t c = 0; c < m.confusion.cols; ++c)
            row.push_back(static_cast<long long>(m.confusion(i, c)));
        conf.push_back(row);
    }
    j["confusion"] = conf;
    return j;
}

// Inverse of metrics_to_json, for rendering a stored machine report.
inline MetricsReport metrics_from_json(const nlohmann::json& j,
                                       std::vector<std::string>* names = nullptr) {
    MetricsReport m;
    m.total = j.at("total").get<size_t>();
    m.accuracy = j.at("accuracy").get<double>();
    m.macro_precision = j.at("macro_precision").get<double>();
    m.macro_recall = j.at("macro_recall").get<double>();
    m.macro_f1 = j.at("macro_f1").get<double>();
    m.weighted_f1 = j.at("weighted_f1").get<double>();
    for (const auto& e : j.at("categories")) {
        m.precision.push_back(e.at("precision").get<double>());
        m.recall.push_back(e.at("recall").get<double>());
        m.f1.push_back(e.at("f1").get<double>());
        m.support.push_back(e.at("support").get<size_t>());
        if (names) names->push_back(e.at("name").get<std::string>());
    }
    m.categories = m.precision.size();
    const auto& conf = j.at("confusion");
    m.confusion = DenseMatrix(conf.size(), m.categories);
    for (size_t i = 0; i < conf.size(); ++i)
        for (size_t c = 0; c < m.categories; ++c)
            m.confusion(i, c) = conf[i][c].get<double>();
    return m;
}

namespace detail {

inline std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

inline std::string pad(std::string s, size_t width) {
    while (s.size() < width) s += ' ';
    return s;
}

}  // namespace detail

// Fixed-precision text table for terminals and README-style summaries.
inline std::string metrics_table(const MetricsReport& m, const std::vector<std::string>& names) {
    size_t name_w = 8;
    for (size_t c = 0; c < m.categories && c < names.size(); ++c)
        name_w = std::max(name_w, names[c].size());
    std::string out;
    out += detail::pad("category", name_w) + "  precision  recall  f1      support\n";
    for (size_t c = 0; c < m.categories; ++c) {
        std::string name = c < names.size() ? names[c] : "c" + std::to_string(c);
        out += detail::pad(name, name_w) + "  " + detail::fixed4(m.precision[c]) + "     " +
               detail::fixed4(m.recall[c]) + "  " + detail::fixed4(m.f1[c]) + "  " +
               std::to_string(m.support[c]) + "\n";
    }
    out += "\n";
    out += "accuracy        " + detail::fixed4(m.accuracy) + "\n";
    out += "macro precision " + detail::fixed4(m.macro_precision) + "\n";
    out += "macro recall    " + detail::fixed4(m.macro_recall) + "\n";
    out += "macro f1        " + detail::fixed4(m.macro_f1) + "\n";
    out += "weighted f1     " + detail::fixed4(m.weighted_f1) + "\n";
    out += "rows            " + std::to_string(m.total) + "\n";
    return out;
}

inline nlohmann::json train_report_to_json(const TrainReport& tr) {
    nlohmann::json j;
    j["steps"] = tr.steps.size();
    j["adv_present"] = tr.adv_present;
    j["best_epoch"] = tr.best_epoch;
    j["best_val_f1"] = tr.best_val_f1;
    j["early_stopped"] = tr.early_stopped;
    j["trained_rows"] = tr.trained_ids.size();
    j["adversarial_rows"] = tr.adversarial_ids.size();
    nlohmann::json epochs = nlohmann::json::array();
    for (size_t e = 0; e < tr.epochs.size(); ++e) {
        const EpochLog& log = tr.epochs[e];
        nlohmann::json le;
        le["epoch"] = e;
        le["cls"] = log.cls;
        le["adv"] = log.adv;
        le["recon"] = log.recon;
        le["total"] = log.total;
        le["learning_rate"] = log.learning_rate;
        le["val_weighted_f1"] = log.val_weighted_f1;
        epochs.push_back(le);
    }
    j["epochs"] = epochs;
    return j;
}

// Full machine report for one task run. The audit id lists make the
// source/target separation externally checkable.
inline nlohmann::json task_result_to_json(const TaskResult& res) {
    size_t k = res.headline.categories;
    std::vector<std::string> names = category_names(k);
    nlohmann::json j;
    j["task"] = token_of(res.kind);
    j["headline"] = metrics_to_json(res.headline, names);
    j["train"] = train_report_to_json(res.train_report);
    nlohmann::json audit;
    audit["train_ids"] = res.audit.train_ids;
    audit["val_ids"] = res.audit.val_ids;
    audit["eval_ids"] = res.audit.eval_ids;
    audit["adversarial_ids"] = res.audit.adversarial_ids;
    j["audit"] = audit;
    if (res.has_adaptation) {
        const AdaptationBlock& ab = res.adaptation;
        nlohmann::json a;
        a["pre"] = metrics_to_json(ab.pre, names);
        a["post"] = metrics_to_json(ab.post, names);
        a["reweighted"] = ab.reweighted;
        if (ab.reweighted) {
            a["weights"] = ab.weights.w;
            a["raw_weights"] = ab.weights.raw;
            a["target_pred_prior"] = ab.target_pred_prior;
            a["retrain"] = train_report_to_json(res.retrain_report);
        }
        j["adaptation"] = a;
    }
    return j;
}

// Human-readable rendering of a task result: headline table, and for
// adaptation runs the pre/post pair plus the estimated class weights.
inline std::string task_result_table(const TaskResult& res) {
    std::vector<std::string> names = category_names(res.headline.categories);
    std::string out = "task: " + token_of(res.kind) + "\n\n";
    if (res.has_adaptation) {
        out += "target metrics before reweighting\n";
        out += metrics_table(res.adaptation.pre, names);
        if (res.adaptation.reweighted) {
            out += "\ntarget metrics after reweighted retraining\n";
            out += metrics_table(res.adaptation.post, names);
            out += "\nimportance weights\n";
            for (size_t c = 0; c < res.adaptation.weights.w.size(); ++c)
                out += detail::pad(names[c], 8) + "  " +
                       ensure_decimal(format_double(res.adaptation.weights.w[c])) + "\n";
        }
    } else {
        out += metrics_table(res.headline, names);
    }
    return out;
}

}  // namespace kean
