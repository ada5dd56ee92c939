#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kean/data.hpp"
#include "kean/features.hpp"
#include "kean/label_shift.hpp"
#include "kean/model.hpp"

namespace kean {

enum class TaskKind { binary, binary_knowledge, fine6, adapt_topic, adapt_platform, adapt_dual };

inline const std::vector<std::string>& task_kind_tokens() {
    static const std::vector<std::string> t = {"binary",      "binary-knowledge", "fine6",
                                               "adapt-topic", "adapt-platform",   "adapt-dual"};
    return t;
}

inline TaskKind task_kind_from_token(const std::string& s) {
    return static_cast<TaskKind>(detail::enum_index(s, task_kind_tokens(), "task"));
}

inline const std::string& token_of(TaskKind k) {
    return task_kind_tokens()[static_cast<size_t>(k)];
}

inline bool is_adaptation(TaskKind k) {
    return k == TaskKind::adapt_topic || k == TaskKind::adapt_platform ||
           k == TaskKind::adapt_dual;
}

// Which rows play source and target. Classification kinds use every row and
// ignore the selectors; adaptation kinds partition by them.
struct TaskSpec {
    TaskKind kind = TaskKind::binary;
    std::vector<std::string> source_topics = {"politics", "entertainment", "business", "health"};
    std::vector<std::string> target_topics = {"society", "conflict"};
    std::string source_platform = "official";
    std::string target_platform = "social";
};

inline void validate_task_spec(const TaskSpec& spec) {
    if (spec.kind == TaskKind::adapt_topic) {
        if (spec.source_topics.size() != 4 || spec.target_topics.size() != 2)
            throw std::invalid_argument(
                "adapt-topic: need exactly 4 source and 2 target topics (got " +
                std::to_string(spec.source_topics.size()) + " and " +
                std::to_string(spec.target_topics.size()) + ")");
        std::set<std::string> seen;
        for (const std::string& t : spec.source_topics) {
            topic_from_token(t);
            seen.insert(t);
        }
        for (const std::string& t : spec.target_topics) {
            topic_from_token(t);
            seen.insert(t);
        }
        if (seen.size() != topic_tokens().size())
            throw std::invalid_argument(
                "adapt-topic: source and target topics must be distinct and together cover all " +
                std::to_string(topic_tokens().size()) + " topics");
    }
    if (spec.kind == TaskKind::adapt_platform || spec.kind == TaskKind::adapt_dual) {
        platform_from_token(spec.source_platform);
        platform_from_token(spec.target_platform);
        if (spec.source_platform == spec.target_platform)
            throw std::invalid_argument(token_of(spec.kind) +
                                        ": source and target platform must differ");
    }
}

struct TaskInputs {
    std::vector<NewsItem> items;
    const IFeatureProvider* text = nullptr;
    const IFeatureProvider* visual = nullptr;
    const IFeatureProvider* knowledge = nullptr;
    uint64_t split_seed = 0;
    std::string stratify_by;
    KeanConfig model;
    TrainConfig train;
    double bbse_ridge = 1e-6;
    bool reweight = true;  // adaptation kinds: estimate label shift and retrain
};

// Label-shift correction artifacts for an adaptation run. pre is the target
// score straight after adversarial training, post after reweighted retraining.
struct AdaptationBlock {
    MetricsReport pre;
    MetricsReport post;
    ImportanceWeights weights;
    std::vector<double> target_pred_prior;
    ConfusionJoint val_confusion;
    bool reweighted = false;
};

// Row provenance: eval rows never intersect train rows, and for adaptation
// kinds the adversarial rows are exactly the (unlabeled) eval rows.
struct TaskAudit {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> eval_ids;
    std::vector<std::string> adversarial_ids;
};

struct TaskResult {
    TaskKind kind = TaskKind::binary;
    MetricsReport headline;
    TrainReport train_report;
    bool has_adaptation = false;
    AdaptationBlock adaptation;
    TrainReport retrain_report;
    TaskAudit audit;
    KeanParams model;  // final model: best-validation, or the reweighted retrain
};

inline size_t task_label(const NewsItem& item, TaskKind kind) {
    return kind == TaskKind::fine6 ? static_cast<size_t>(item.fine_label)
                                   : static_cast<size_t>(item.binary_label);
}

// Plain binary deliberately drops the knowledge modality even when a provider
// is supplied; every other kind uses whatever providers exist.
inline TrainData build_task_data(const std::vector<NewsItem>& items, TaskKind kind,
                                 const IFeatureProvider* text, const IFeatureProvider* visual,
                                 const IFeatureProvider* knowledge, const KeanConfig& model,
                                 bool labeled) {
    const IFeatureProvider* kp = kind == TaskKind::binary ? nullptr : knowledge;
    TrainData d;
    d.batch = build_batch(items, text, visual, kp, model.text_dim, model.visual_dim,
                          model.knowledge_dim);
    for (const NewsItem& it : items) {
        d.labels.push_back(labeled ? static_cast<int>(task_label(it, kind)) : -1);
        d.ids.push_back(it.id);
    }
    return d;
}

namespace detail {

inline std::string join_tokens(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += v[i];
    }
    return out;
}

inline std::string source_selector_text(const TaskSpec& s) {
    switch (s.kind) {
        case TaskKind::adapt_topic:
            return "source topics " + join_tokens(s.source_topics);
        case TaskKind::adapt_platform:
            return "topic 'politics' on source platform '" + s.source_platform + "'";
        default:
            return "topic 'conflict' on source platform '" + s.source_platform + "'";
    }
}

inline std::string target_selector_text(const TaskSpec& s) {
    switch (s.kind) {
        case TaskKind::adapt_topic:
            return "target topics " + join_tokens(s.target_topics);
        default:
            return "topic 'politics' on target platform '" + s.target_platform + "'";
    }
}

}  // namespace detail

// Row assignment for one task: classification kinds cut the usual three-way
// split (eval = test); adaptation kinds select the task's source rows, cut
// them 9:1 into train/val, and evaluate on the target rows.
struct TaskPartition {
    std::vector<NewsItem> train, val, eval;
};

inline TaskPartition partition_task(const TaskSpec& spec, const std::vector<NewsItem>& items,
                                    uint64_t split_seed, const std::string& stratify_by) {
    validate_task_spec(spec);
    if (items.empty()) throw std::invalid_argument("run_task: dataset is empty");
    TaskPartition part;

    if (!is_adaptation(spec.kind)) {
        SplitSpec ss;
        ss.kind = SplitKind::classification_6_2_2;
        ss.seed = split_seed;
        ss.stratify_by = stratify_by;
        SplitResult sr = split(items, ss);
        for (size_t r : sr.train) part.train.push_back(items[r]);
        for (size_t r : sr.val) part.val.push_back(items[r]);
        for (size_t r : sr.test) part.eval.push_back(items[r]);
        return part;
    }

    std::vector<NewsItem> source_items;
    for (const NewsItem& it : items) {
        bool src = false, tgt = false;
        if (spec.kind == TaskKind::adapt_topic) {
            const std::string& t = token_of(it.topic);
            src = std::find(spec.source_topics.begin(), spec.source_topics.end(), t) !=
                  spec.source_topics.end();
            tgt = std::find(spec.target_topics.begin(), spec.target_topics.end(), t) !=
                  spec.target_topics.end();
        } else if (spec.kind == TaskKind::adapt_platform) {
            if (it.topic == Topic::politics) {
                src = token_of(it.platform) == spec.source_platform;
                tgt = token_of(it.platform) == spec.target_platform;
            }
        } else {
            src = it.topic == Topic::conflict && token_of(it.platform) == spec.source_platform;
            tgt = it.topic == Topic::politics && token_of(it.platform) == spec.target_platform;
        }
        if (src)
            source_items.push_back(it);
        else if (tgt)
            part.eval.push_back(it);
    }
    if (source_items.empty())
        throw std::invalid_argument(token_of(spec.kind) + ": no rows match " +
                                    detail::source_selector_text(spec));
    if (part.eval.empty())
        throw std::invalid_argument(token_of(spec.kind) + ": no rows match " +
                                    detail::target_selector_text(spec));

    SplitSpec ss;
    ss.kind = SplitKind::adaptation_9_1;
    ss.seed = split_seed;
    ss.stratify_by = stratify_by;
    SplitResult sr = split(source_items, ss);
    if (sr.val.empty())
        throw std::invalid_argument(token_of(spec.kind) + ": the 9:1 split of " +
                                    std::to_string(source_items.size()) +
                                    " source rows yields no validation rows; need at least 10");
    for (size_t r : sr.train) part.train.push_back(source_items[r]);
    for (size_t r : sr.val) part.val.push_back(source_items[r]);
    return part;
}

// Runs one task end to end: split, train, evaluate, and for adaptation kinds
// estimate the target label prior and retrain with importance weights.
inline TaskResult run_task(const TaskSpec& spec, const TaskInputs& in) {
    validate_task_spec(spec);
    validate_config(in.model);
    if (in.items.empty()) throw std::invalid_argument("run_task: dataset is empty");
    if (!in.text) throw std::invalid_argument("run_task: a text feature provider is required");
    if (spec.kind == TaskKind::binary_knowledge && !in.knowledge)
        throw std::invalid_argument("binary-knowledge: a knowledge feature provider is required");
    size_t need_k = spec.kind == TaskKind::fine6 ? fine_label_tokens().size() : 2;
    if (in.model.categories != need_k)
        throw std::invalid_argument(token_of(spec.kind) + ": model must have " +
                                    std::to_string(need_k) + " categories (got " +
                                    std::to_string(in.model.categories) + ")");

    TaskResult res;
    res.kind = spec.kind;
    TaskPartition part = partition_task(spec, in.items, in.split_seed, in.stratify_by);
    TrainData train =
        build_task_data(part.train, spec.kind, in.text, in.visual, in.knowledge, in.model, true);
    TrainData val =
        build_task_data(part.val, spec.kind, in.text, in.visual, in.knowledge, in.model, true);

    if (!is_adaptation(spec.kind)) {
        TrainData test = build_task_data(part.eval, spec.kind, in.text, in.visual, in.knowledge,
                                         in.model, true);
        TrainData no_target;

        Rng init_rng(in.train.seed);
        KeanParams params = init_kean(in.model, init_rng);
        res.train_report = train_dann(train, val, no_target, params, in.train);

        std::vector<size_t> preds = argmax_rows(kean_predict_probs(test.batch, params));
        std::vector<size_t> truth;
        for (int l : test.labels) truth.push_back(static_cast<size_t>(l));
        res.headline = compute_metrics(preds, truth, need_k);
        res.audit.train_ids = train.ids;
        res.audit.val_ids = val.ids;
        res.audit.eval_ids = test.ids;
        res.model = params;
        return res;
    }

    TrainData target =
        build_task_data(part.eval, spec.kind, in.text, in.visual, in.knowledge, in.model, false);
    std::vector<size_t> target_truth;
    for (const NewsItem& it : part.eval) target_truth.push_back(task_label(it, spec.kind));

    Rng init_rng(in.train.seed);
    KeanParams params = init_kean(in.model, init_rng);
    res.train_report = train_dann(train, val, target, params, in.train);

    res.has_adaptation = true;
    res.model = params;
    AdaptationBlock& ab = res.adaptation;
    std::vector<size_t> tgt_preds = argmax_rows(kean_predict_probs(target.batch, params));
    ab.pre = compute_metrics(tgt_preds, target_truth, need_k);

    if (in.reweight) {
        std::vector<size_t> val_preds = argmax_rows(kean_predict_probs(val.batch, params));
        std::vector<size_t> val_truth;
        for (int l : val.labels) val_truth.push_back(static_cast<size_t>(l));
        ab.val_confusion = confusion(val_preds, val_truth, need_k);
        ab.target_pred_prior = predict_q(tgt_preds, need_k);
        ab.weights = estimate_weights(ab.val_confusion, ab.target_pred_prior, in.bbse_ridge);

        Rng retrain_rng(in.train.seed);
        KeanParams fresh = init_kean(in.model, retrain_rng);
        res.retrain_report = retrain_reweighted(train, val, target, ab.weights.w, fresh, in.train);
        std::vector<size_t> post_preds = argmax_rows(kean_predict_probs(target.batch, fresh));
        ab.post = compute_metrics(post_preds, target_truth, need_k);
        ab.reweighted = true;
        res.model = fresh;
    } else {
        ab.post = ab.pre;
    }

    res.headline = ab.post;
    res.audit.train_ids = train.ids;
    res.audit.val_ids = val.ids;
    res.audit.eval_ids = target.ids;
    res.audit.adversarial_ids = res.train_report.adversarial_ids;
    return res;
}

}  // namespace kean
