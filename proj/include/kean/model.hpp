#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "features.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "optim.hpp"
#include "tape.hpp"

#include "json.hpp"

namespace kean {

struct KeanConfig {
    size_t text_dim = 256;
    size_t visual_dim = 256;
    size_t knowledge_dim = 50;
    size_t text_proj = 64;
    size_t visual_proj = 64;
    size_t knowledge_proj = 64;
    size_t classifier_hidden = 64;
    size_t discriminator_hidden = 64;
    size_t categories = 2;
};

inline void validate_config(const KeanConfig& c) {
    auto need = [](size_t v, const char* name) {
        if (v == 0) throw std::invalid_argument(std::string("KeanConfig: ") + name + " must be positive");
    };
    need(c.text_dim, "text_dim");
    need(c.visual_dim, "visual_dim");
    need(c.knowledge_dim, "knowledge_dim");
    need(c.text_proj, "text_proj");
    need(c.visual_proj, "visual_proj");
    need(c.knowledge_proj, "knowledge_proj");
    need(c.classifier_hidden, "classifier_hidden");
    need(c.discriminator_hidden, "discriminator_hidden");
    if (c.categories < 2) throw std::invalid_argument("KeanConfig: categories must be at least 2");
}

// All trainable state. Fused width is text_proj + visual_proj + knowledge_proj;
// the decoder reads only the knowledge slice of the fused vector.
struct KeanParams {
    KeanConfig config;
    FusionParams fusion;
    LayerParams classifier_hidden;
    LayerParams classifier_out;
    LayerParams discriminator_hidden;
    LayerParams discriminator_out;
    LayerParams decoder;

    size_t fused_dim() const { return fusion.fused_dim(); }

    template <typename Fn>
    void for_each_layer(Fn fn) {
        fn(fusion.text_proj, "fusion.text");
        fn(fusion.visual_proj, "fusion.visual");
        fn(fusion.knowledge_proj, "fusion.knowledge");
        fn(classifier_hidden, "classifier.hidden");
        fn(classifier_out, "classifier.out");
        fn(discriminator_hidden, "discriminator.hidden");
        fn(discriminator_out, "discriminator.out");
        fn(decoder, "decoder");
    }

    std::vector<ParamView> param_views() {
        std::vector<ParamView> v;
        for_each_layer([&v](LayerParams& p, const std::string& base) {
            v.push_back({p.weight.values.data(), p.weight_grad.values.data(),
                         p.weight.values.size(), base + ".weight"});
            v.push_back({p.bias.data(), p.bias_grad.data(), p.bias.size(), base + ".bias"});
        });
        return v;
    }

    void zero_grads() {
        for_each_layer([](LayerParams& p, const std::string&) { p.zero_grads(); });
    }
};

// Named value blocks with shapes, in the same order as param_views; biases are
// stored as a single row. Used by the checkpoint format.
struct TensorRef {
    std::string name;
    std::vector<double>* values;
    size_t rows, cols;
};

inline std::vector<TensorRef> tensor_refs(KeanParams& params) {
    std::vector<TensorRef> v;
    params.for_each_layer([&v](LayerParams& p, const std::string& base) {
        v.push_back({base + ".weight", &p.weight.values, p.weight.rows, p.weight.cols});
        v.push_back({base + ".bias", &p.bias, 1, p.bias.size()});
    });
    return v;
}

inline KeanParams init_kean(const KeanConfig& cfg, Rng& rng) {
    validate_config(cfg);
    KeanParams p;
    p.config = cfg;
    p.fusion = init_fusion(cfg.text_dim, cfg.visual_dim, cfg.knowledge_dim,
                           cfg.text_proj, cfg.visual_proj, cfg.knowledge_proj, rng);
    size_t fused = p.fusion.fused_dim();
    p.classifier_hidden = init_layer(fused, cfg.classifier_hidden, Activation::relu, rng);
    p.classifier_out = init_layer(cfg.classifier_hidden, cfg.categories, Activation::softmax, rng);
    p.discriminator_hidden = init_layer(fused, cfg.discriminator_hidden, Activation::relu, rng);
    p.discriminator_out = init_layer(cfg.discriminator_hidden, 1, Activation::sigmoid, rng);
    p.decoder = init_layer(cfg.knowledge_proj, cfg.knowledge_dim, Activation::identity, rng);
    return p;
}

struct KeanOutputs {
    Tensor fused;           // B x fused_dim
    Tensor category;        // B x categories, rows on the simplex
    Tensor domain;          // B x 1 in (0,1); only when has_domain
    Tensor reconstruction;  // B x knowledge_dim; only when has_reconstruction
    bool has_domain = false;
    bool has_reconstruction = false;
};

// Single recorded pass. The domain branch sees the fused vector through a
// gradient-reversal node so one backward pass trains both sides of the game.
inline KeanOutputs kean_forward(GradTape& tape, const ModalityBatch& batch, KeanParams& p,
                                double grl_lambda, bool with_discriminator, bool with_decoder) {
    const KeanConfig& c = p.config;
    if (batch.text.cols != c.text_dim || batch.visual.cols != c.visual_dim ||
        batch.knowledge.cols != c.knowledge_dim)
        throw std::invalid_argument("kean_forward: batch modality dims do not match config");
    KeanOutputs out;
    out.fused = fuse(tape, batch, p.fusion);
    Tensor clf_h = dense_forward(tape, out.fused, p.classifier_hidden);
    out.category = dense_forward(tape, clf_h, p.classifier_out);
    if (with_discriminator) {
        Tensor reversed = grl_forward(tape, out.fused, grl_lambda);
        Tensor disc_h = dense_forward(tape, reversed, p.discriminator_hidden);
        out.domain = dense_forward(tape, disc_h, p.discriminator_out);
        out.has_domain = true;
    }
    if (with_decoder) {
        size_t kg_off = c.text_proj + c.visual_proj;
        Tensor kg_slice = slice_cols(tape, out.fused, kg_off, c.knowledge_proj);
        out.reconstruction = dense_forward(tape, kg_slice, p.decoder);
        out.has_reconstruction = true;
    }
    return out;
}

struct TrainConfig {
    double alpha = 0.8;
    double beta = 0.4;
    size_t batch_size = 32;
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    double lr_decay = 0.95;
    size_t epochs = 20;
    uint64_t seed = 0;
    double grl_lambda = 1.0;
    size_t patience = 5;
    std::vector<double> class_weights;  // one per category; empty means unweighted
};

inline void validate_train_config(const TrainConfig& t, size_t categories) {
    if (t.batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (t.epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be positive");
    if (!(t.learning_rate > 0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (!(t.lr_decay > 0) || t.lr_decay > 1.0)
        throw std::invalid_argument("TrainConfig: lr_decay must be in (0, 1]");
    if (t.alpha < 0 || t.beta < 0)
        throw std::invalid_argument("TrainConfig: loss weights must be non-negative");
    if (t.grl_lambda < 0) throw std::invalid_argument("TrainConfig: grl_lambda must be non-negative");
    if (!t.class_weights.empty()) {
        if (t.class_weights.size() != categories)
            throw std::invalid_argument("TrainConfig: need one class weight per category (got " +
                                        std::to_string(t.class_weights.size()) + ", expected " +
                                        std::to_string(categories) + ")");
        for (double w : t.class_weights)
            if (!std::isfinite(w) || w < 0)
                throw std::invalid_argument("TrainConfig: class weights must be finite and non-negative");
    }
}

struct LossBreakdown {
    double cls = 0.0;
    double adv = 0.0;
    double recon = 0.0;
    double total = 0.0;
    bool adv_present = false;
    size_t source_rows = 0;
    size_t target_rows = 0;
    size_t knowledge_rows = 0;
};

// Combined objective over one batch. Source rows carry labels; target rows are
// unlabeled and contribute only to the adversarial term. Rows without knowledge
// are excluded from the reconstruction mean. When tape is non-null the output
// gradients are seeded so a single backward pass yields d(total)/d(params).
inline LossBreakdown compute_losses(GradTape* tape, const KeanOutputs& out,
                                    const ModalityBatch& batch, const std::vector<int>& labels,
                                    const std::vector<uint8_t>& is_target, const TrainConfig& cfg) {
    size_t n = out.category.value.rows;
    size_t k = out.category.value.cols;
    if (labels.size() != n || is_target.size() != n)
        throw std::invalid_argument("compute_losses: labels/flags length must match batch rows");

    size_t n_src = 0, n_tgt = 0;
    for (size_t i = 0; i < n; ++i) (is_target[i] ? n_tgt : n_src)++;
    if (n_src == 0)
        throw std::invalid_argument("compute_losses: batch has no source rows; classification loss undefined");

    std::vector<double> cw(k, 1.0);
    if (!cfg.class_weights.empty()) {
        if (cfg.class_weights.size() != k)
            throw std::invalid_argument("compute_losses: class weight count does not match categories");
        cw = cfg.class_weights;
    }

    LossBreakdown b;
    b.source_rows = n_src;
    b.target_rows = n_tgt;

    DenseMatrix cat_grad(n, k);
    double cls_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (is_target[i]) continue;
        int y = labels[i];
        if (y < 0 || size_t(y) >= k)
            throw std::invalid_argument("compute_losses: source row " + std::to_string(i) +
                                        " has label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(k) + ")");
        std::vector<double> row = out.category.value.row(i);
        cls_sum += cw[size_t(y)] * cross_entropy_at(size_t(y), row);
        if (tape)
            cat_grad(i, size_t(y)) =
                cw[size_t(y)] * (-1.0 / clamp_prob(row[size_t(y)])) / double(n_src);
    }
    b.cls = cls_sum / double(n_src);

    DenseMatrix dom_grad;
    if (out.has_domain && n_tgt > 0) {
        dom_grad = DenseMatrix(n, 1);
        double src_sum = 0.0, tgt_sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double d = out.domain.value(i, 0);
            int want = is_target[i] ? 0 : 1;
            (is_target[i] ? tgt_sum : src_sum) += bce_loss(want, d);
            if (tape) {
                double denom = is_target[i] ? double(n_tgt) : double(n_src);
                dom_grad(i, 0) = cfg.alpha * bce_grad(want, d) / denom;
            }
        }
        b.adv = src_sum / double(n_src) + tgt_sum / double(n_tgt);
        b.adv_present = true;
    }

    DenseMatrix rec_grad;
    if (out.has_reconstruction) {
        size_t dk = out.reconstruction.value.cols;
        if (batch.knowledge.cols != dk)
            throw std::invalid_argument("compute_losses: reconstruction width does not match knowledge width");
        size_t n_kg = 0;
        for (size_t i = 0; i < n; ++i) n_kg += batch.knowledge_mask[i] ? 1 : 0;
        b.knowledge_rows = n_kg;
        if (n_kg > 0) {
            rec_grad = DenseMatrix(n, dk);
            double sum = 0.0;
            for (size_t i = 0; i < n; ++i) {
                if (!batch.knowledge_mask[i]) continue;
                for (size_t j = 0; j < dk; ++j) {
                    double diff = out.reconstruction.value(i, j) - batch.knowledge(i, j);
                    sum += diff * diff;
                    if (tape) rec_grad(i, j) = cfg.beta * 2.0 * diff / double(n_kg);
                }
            }
            b.recon = sum / double(n_kg);
        }
    }

    b.total = b.cls + cfg.alpha * b.adv + cfg.beta * b.recon;

    if (tape) {
        tape->seed(out.category, cat_grad);
        if (b.adv_present) tape->seed(out.domain, dom_grad);
        if (b.knowledge_rows > 0) tape->seed(out.reconstruction, rec_grad);
    }
    return b;
}

struct TrainData {
    ModalityBatch batch;
    std::vector<int> labels;  // -1 marks an unlabeled row
    std::vector<std::string> ids;
};

inline void validate_train_data(const TrainData& d, const char* what) {
    size_t n = d.batch.rows();
    if (d.labels.size() != n || d.ids.size() != n)
        throw std::invalid_argument(std::string("train_dann: ") + what +
                                    " labels/ids length must match batch rows");
}

struct EpochLog {
    double cls = 0.0;
    double adv = 0.0;
    double recon = 0.0;
    double total = 0.0;
    bool adv_present = false;
    double learning_rate = 0.0;
    double val_weighted_f1 = -1.0;  // -1 when no validation split
};

struct TrainReport {
    std::vector<LossBreakdown> steps;
    std::vector<EpochLog> epochs;
    bool adv_present = false;
    size_t best_epoch = 0;
    double best_val_f1 = -1.0;
    bool early_stopped = false;
    std::vector<std::string> trained_ids;       // rows whose labels entered the classification loss
    std::vector<std::string> adversarial_ids;   // unlabeled rows seen only by the domain branch
};

inline DenseMatrix kean_predict_probs(const ModalityBatch& batch, KeanParams& params) {
    GradTape tape;
    KeanOutputs out = kean_forward(tape, batch, params, 0.0, false, false);
    return out.category.value;
}

inline std::vector<size_t> argmax_rows(const DenseMatrix& m) {
    if (m.cols == 0) throw std::invalid_argument("argmax_rows: zero columns");
    std::vector<size_t> out(m.rows);
    for (size_t i = 0; i < m.rows; ++i) {
        size_t best = 0;
        for (size_t j = 1; j < m.cols; ++j)
            if (m(i, j) > m(i, best)) best = j;
        out[i] = best;
    }
    return out;
}

// Adversarial training loop. Each step pairs a batch of labeled source rows
// with a same-sized batch of unlabeled target rows (cycling); the discriminator
// runs only when target rows exist, the decoder only when knowledge rows exist.
// Model selection is weighted F1 on the source validation split.
inline TrainReport train_dann(const TrainData& source_train, const TrainData& source_val,
                              const TrainData& target, KeanParams& params, const TrainConfig& cfg) {
    validate_train_config(cfg, params.config.categories);
    validate_train_data(source_train, "source_train");
    validate_train_data(source_val, "source_val");
    validate_train_data(target, "target");
    size_t n_src = source_train.batch.rows();
    size_t n_tgt = target.batch.rows();
    size_t k = params.config.categories;
    if (n_src == 0) throw std::invalid_argument("train_dann: source training set is empty");
    for (size_t i = 0; i < n_src; ++i)
        if (source_train.labels[i] < 0 || size_t(source_train.labels[i]) >= k)
            throw std::invalid_argument("train_dann: source row " + std::to_string(i) +
                                        " has label outside [0, " + std::to_string(k) + ")");
    for (size_t i = 0; i < source_val.batch.rows(); ++i)
        if (source_val.labels[i] < 0 || size_t(source_val.labels[i]) >= k)
            throw std::invalid_argument("train_dann: validation row " + std::to_string(i) +
                                        " has label outside [0, " + std::to_string(k) + ")");

    TrainReport report;
    report.trained_ids = source_train.ids;
    report.adversarial_ids = target.ids;

    Rng rng(cfg.seed);
    OptimizerState opt;
    opt.learning_rate = cfg.learning_rate;
    opt.weight_decay = cfg.weight_decay;
    auto views = params.param_views();

    std::vector<size_t> src_idx(n_src), tgt_idx(n_tgt);
    for (size_t i = 0; i < n_src; ++i) src_idx[i] = i;
    for (size_t i = 0; i < n_tgt; ++i) tgt_idx[i] = i;
    size_t tgt_cursor = 0;

    bool have_val = source_val.batch.rows() > 0;
    KeanParams best = params;
    double best_f1 = -1.0;
    size_t best_epoch = 0;
    size_t since_best = 0;

    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.learning_rate = cfg.learning_rate * std::pow(cfg.lr_decay, double(epoch));
        rng.shuffle(src_idx);
        if (n_tgt > 0) rng.shuffle(tgt_idx);

        double e_cls = 0.0, e_adv = 0.0, e_recon = 0.0, e_total = 0.0;
        size_t n_steps = 0, n_adv_steps = 0;

        for (size_t start = 0; start < n_src; start += cfg.batch_size) {
            size_t stop = std::min(start + cfg.batch_size, n_src);
            std::vector<size_t> rows_s(src_idx.begin() + long(start), src_idx.begin() + long(stop));
            std::vector<size_t> rows_t;
            if (n_tgt > 0) {
                for (size_t i = 0; i < rows_s.size(); ++i) {
                    rows_t.push_back(tgt_idx[tgt_cursor]);
                    tgt_cursor = (tgt_cursor + 1) % n_tgt;
                }
            }

            ModalityBatch sb = take_rows(source_train.batch, rows_s);
            ModalityBatch combined = rows_t.empty() ? sb : concat_batches(sb, take_rows(target.batch, rows_t));
            std::vector<int> labels;
            std::vector<uint8_t> flags;
            for (size_t r : rows_s) {
                labels.push_back(source_train.labels[r]);
                flags.push_back(0);
            }
            for (size_t i = 0; i < rows_t.size(); ++i) {
                labels.push_back(-1);
                flags.push_back(1);
            }

            bool with_disc = !rows_t.empty();
            bool with_dec = false;
            for (uint8_t m : combined.knowledge_mask) with_dec = with_dec || m;

            params.zero_grads();
            GradTape tape;
            KeanOutputs out = kean_forward(tape, combined, params, cfg.grl_lambda, with_disc, with_dec);
            LossBreakdown step = compute_losses(&tape, out, combined, labels, flags, cfg);
            if (!std::isfinite(step.total))
                throw std::runtime_error("train_dann: non-finite loss at epoch " + std::to_string(epoch) +
                                         " batch " + std::to_string(start / cfg.batch_size));
            tape.backward();
            adamw_step(views, opt);

            report.steps.push_back(step);
            e_cls += step.cls;
            e_recon += step.recon;
            e_total += step.total;
            if (step.adv_present) {
                e_adv += step.adv;
                ++n_adv_steps;
                report.adv_present = true;
            }
            ++n_steps;
        }

        EpochLog log;
        log.cls = e_cls / double(n_steps);
        log.adv = n_adv_steps ? e_adv / double(n_adv_steps) : 0.0;
        log.recon = e_recon / double(n_steps);
        log.total = e_total / double(n_steps);
        log.adv_present = n_adv_steps > 0;
        log.learning_rate = opt.learning_rate;

        if (have_val) {
            DenseMatrix probs = kean_predict_probs(source_val.batch, params);
            std::vector<size_t> preds = argmax_rows(probs);
            std::vector<size_t> truth(source_val.labels.size());
            for (size_t i = 0; i < truth.size(); ++i) truth[i] = size_t(source_val.labels[i]);
            MetricsReport m = compute_metrics(preds, truth, k);
            log.val_weighted_f1 = m.weighted_f1;
            if (m.weighted_f1 > best_f1) {
                best_f1 = m.weighted_f1;
                best_epoch = epoch;
                best = params;
                since_best = 0;
            } else {
                ++since_best;
            }
        }
        report.epochs.push_back(log);

        if (have_val && since_best >= cfg.patience) {
            report.early_stopped = true;
            break;
        }
    }

    if (have_val) {
        params = best;
        report.best_epoch = best_epoch;
        report.best_val_f1 = best_f1;
    } else {
        report.best_epoch = report.epochs.empty() ? 0 : report.epochs.size() - 1;
    }
    return report;
}

// Fresh pass with per-category weights on the classification loss; used after
// importance weights have been estimated on the source validation split.
inline TrainReport retrain_reweighted(const TrainData& source_train, const TrainData& source_val,
                                      const TrainData& target, const std::vector<double>& weights,
                                      KeanParams& params, TrainConfig cfg) {
    if (weights.size() != params.config.categories)
        throw std::invalid_argument("retrain_reweighted: need one weight per category (got " +
                                    std::to_string(weights.size()) + ", expected " +
                                    std::to_string(params.config.categories) + ")");
    for (double w : weights)
        if (!std::isfinite(w) || w < 0)
            throw std::invalid_argument("retrain_reweighted: weights must be finite and non-negative");
    cfg.class_weights = weights;
    return train_dann(source_train, source_val, target, params, cfg);
}

namespace detail {

inline void append_le_doubles(std::string& out, const std::vector<double>& v) {
    for (double d : v) {
        uint64_t bits;
        std::memcpy(&bits, &d, sizeof bits);
        for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
    }
}

inline std::vector<double> read_le_doubles(const std::string& raw, size_t offset, size_t count) {
    if (offset * 8 + count * 8 > raw.size())
        throw std::runtime_error("checkpoint payload is shorter than the manifest claims");
    std::vector<double> v(count);
    for (size_t i = 0; i < count; ++i) {
        uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= uint64_t(uint8_t(raw[(offset + i) * 8 + size_t(b)])) << (8 * b);
        std::memcpy(&v[i], &bits, sizeof bits);
    }
    return v;
}

}  // namespace detail

// Two files: <base>.json describes shapes and offsets, <base>.bin holds the
// values as little-endian doubles in manifest order. Same params, same bytes.
inline void save_checkpoint(KeanParams& params, const std::string& base_path) {
    nlohmann::json manifest;
    manifest["format"] = "kean-checkpoint";
    manifest["version"] = 1;
    const KeanConfig& c = params.config;
    manifest["config"] = {
        {"text_dim", c.text_dim},           {"visual_dim", c.visual_dim},
        {"knowledge_dim", c.knowledge_dim}, {"text_proj", c.text_proj},
        {"visual_proj", c.visual_proj},     {"knowledge_proj", c.knowledge_proj},
        {"classifier_hidden", c.classifier_hidden},
        {"discriminator_hidden", c.discriminator_hidden},
        {"categories", c.categories}};
    std::string payload;
    nlohmann::json tensors = nlohmann::json::array();
    size_t offset = 0;
    for (auto& tr : tensor_refs(params)) {
        tensors.push_back({{"name", tr.name},
                           {"rows", tr.rows},
                           {"cols", tr.cols},
                           {"offset", offset}});
        detail::append_le_doubles(payload, *tr.values);
        offset += tr.values->size();
    }
    manifest["tensors"] = tensors;
    manifest["payload_doubles"] = offset;

    std::ofstream mf(base_path + ".json", std::ios::binary);
    if (!mf) throw std::runtime_error("cannot write checkpoint manifest: " + base_path + ".json");
    mf << manifest.dump(2) << "\n";
    mf.close();
    std::ofstream bf(base_path + ".bin", std::ios::binary);
    if (!bf) throw std::runtime_error("cannot write checkpoint payload: " + base_path + ".bin");
    bf.write(payload.data(), std::streamsize(payload.size()));
    bf.close();
    if (!bf) throw std::runtime_error("failed writing checkpoint payload: " + base_path + ".bin");
}

inline KeanParams load_checkpoint(const std::string& base_path) {
    std::ifstream mf(base_path + ".json", std::ios::binary);
    if (!mf) throw std::runtime_error("cannot open checkpoint manifest: " + base_path + ".json");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint manifest is not valid JSON: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != std::string("kean-checkpoint"))
        throw std::runtime_error("checkpoint manifest has unexpected format field");
    if (manifest.value("version", 0) != 1)
        throw std::runtime_error("checkpoint manifest has unsupported version");
    const auto& jc = manifest.at("config");
    KeanConfig c;
    c.text_dim = jc.at("text_dim").get<size_t>();
    c.visual_dim = jc.at("visual_dim").get<size_t>();
    c.knowledge_dim = jc.at("knowledge_dim").get<size_t>();
    c.text_proj = jc.at("text_proj").get<size_t>();
    c.visual_proj = jc.at("visual_proj").get<size_t>();
    c.knowledge_proj = jc.at("knowledge_proj").get<size_t>();
    c.classifier_hidden = jc.at("classifier_hidden").get<size_t>();
    c.discriminator_hidden = jc.at("discriminator_hidden").get<size_t>();
    c.categories = jc.at("categories").get<size_t>();

    Rng rng(0);
    KeanParams params = init_kean(c, rng);

    std::ifstream bf(base_path + ".bin", std::ios::binary);
    if (!bf) throw std::runtime_error("cannot open checkpoint payload: " + base_path + ".bin");
    std::string raw((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
    size_t expect = manifest.at("payload_doubles").get<size_t>();
    if (raw.size() != expect * 8)
        throw std::runtime_error("checkpoint payload size mismatch: expected " +
                                 std::to_string(expect * 8) + " bytes, found " +
                                 std::to_string(raw.size()));

    auto refs = tensor_refs(params);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != refs.size())
        throw std::runtime_error("checkpoint tensor count does not match this architecture");
    for (size_t i = 0; i < refs.size(); ++i) {
        const auto& jt = tensors.at(i);
        if (jt.at("name").get<std::string>() != refs[i].name)
            throw std::runtime_error("checkpoint tensor order mismatch at '" +
                                     jt.at("name").get<std::string>() + "'");
        size_t rows = jt.at("rows").get<size_t>();
        size_t cols = jt.at("cols").get<size_t>();
        if (rows != refs[i].rows || cols != refs[i].cols)
            throw std::runtime_error("checkpoint tensor '" + refs[i].name + "' has shape " +
                                     std::to_string(rows) + "x" + std::to_string(cols) +
                                     ", expected " + std::to_string(refs[i].rows) + "x" +
                                     std::to_string(refs[i].cols));
        *refs[i].values = detail::read_le_doubles(raw, jt.at("offset").get<size_t>(), rows * cols);
    }
    return params;
}

}  // namespace kean
