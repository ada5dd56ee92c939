#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kean/data.hpp"
#include "kean/knowledge.hpp"
#include "kean/layers.hpp"
#include "kean/tape.hpp"
#include "kean/util.hpp"

namespace kean {

// present=false marks a missing modality; its values are all zero and the
// fusion layer masks the projected block to zero.
struct FeatureVector {
    std::vector<double> values;
    bool present = true;
};

class IFeatureProvider {
public:
    virtual ~IFeatureProvider() = default;
    virtual size_t dimension() const = 0;
    virtual std::string kind() const = 0;
    virtual FeatureVector features(const NewsItem& item) const = 0;
};

// Signed feature hashing over lowercase alphanumeric tokens. For each token,
// h = fnv1a64(token, seed); bucket = (h >> 1) % dim; sign = +1 if (h & 1) else
// -1. Accumulated counts are L2-normalized; the zero vector stays zero.
class TextHashProvider : public IFeatureProvider {
public:
    TextHashProvider(size_t dim, uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim == 0) throw std::invalid_argument("TextHashProvider: dim must be > 0");
    }

    size_t dimension() const override { return dim_; }
    std::string kind() const override { return "hashing-text"; }

    static std::vector<std::string> tokenize(const std::string& text) {
        std::vector<std::string> toks;
        std::string cur;
        for (unsigned char c : text) {
            bool token_char = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                              (c >= '0' && c <= '9') || c >= 0x80;
            if (token_char) {
                cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                                   : static_cast<char>(c));
            } else if (!cur.empty()) {
                toks.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty()) toks.push_back(std::move(cur));
        return toks;
    }

    FeatureVector features(const NewsItem& item) const override {
        FeatureVector fv;
        fv.values.assign(dim_, 0.0);
        for (const std::string& tok : tokenize(item.text)) {
            uint64_t h = fnv1a64(tok, seed_);
            size_t bucket = static_cast<size_t>((h >> 1) % dim_);
            fv.values[bucket] += (h & 1) ? 1.0 : -1.0;
        }
        double n = l2_norm(fv.values);
        if (n > 0.0)
            for (double& v : fv.values) v /= n;
        return fv;
    }

private:
    size_t dim_;
    uint64_t seed_;
};

// First line `dim=<n>`, then `item_id<TAB>v1 v2 ... vn`. Strict: row count,
// duplicate ids, and non-finite values are all rejected with their line.
inline std::unordered_map<std::string, std::vector<double>> load_precomputed(
    const std::string& path, size_t expected_dim = 0) {
    std::vector<std::string> lines = read_lines(path);
    if (lines.empty() || lines[0].rfind("dim=", 0) != 0)
        throw std::runtime_error(path + ":1: expected header dim=<n>");
    size_t dim = static_cast<size_t>(parse_long(lines[0].substr(4), path + " header"));
    if (expected_dim != 0 && dim != expected_dim)
        throw std::runtime_error(path + ": dim=" + std::to_string(dim) + " but expected " +
                                 std::to_string(expected_dim));
    std::unordered_map<std::string, std::vector<double>> out;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::string where = path + ":" + std::to_string(i + 1);
        size_t tab = lines[i].find('\t');
        if (tab == std::string::npos || tab == 0)
            throw std::runtime_error(where + ": expected item_id<TAB>values");
        std::string id = lines[i].substr(0, tab);
        std::vector<std::string> parts = split_whitespace(lines[i].substr(tab + 1));
        if (parts.size() != dim)
            throw std::runtime_error(where + ": has " + std::to_string(parts.size()) +
                                     " values, expected " + std::to_string(dim));
        std::vector<double> v(dim);
        for (size_t j = 0; j < dim; ++j) {
            v[j] = parse_double(parts[j], where);
            if (!std::isfinite(v[j])) throw std::runtime_error(where + ": non-finite value");
        }
        if (!out.emplace(std::move(id), std::move(v)).second)
            throw std::runtime_error(where + ": duplicate id '" + lines[i].substr(0, tab) + "'");
    }
    return out;
}

// Rows sorted by id so the bytes are deterministic; values round-trip exactly.
inline void save_precomputed(const std::unordered_map<std::string, std::vector<double>>& vectors,
                             size_t dim, const std::string& path) {
    std::vector<std::string> ids;
    ids.reserve(vectors.size());
    for (const auto& [id, v] : vectors) {
        if (v.size() != dim)
            throw std::invalid_argument("save_precomputed: '" + id + "' has " +
                                        std::to_string(v.size()) + " values, expected " +
                                        std::to_string(dim));
        for (double x : v)
            if (!std::isfinite(x))
                throw std::invalid_argument("save_precomputed: non-finite value in '" + id + "'");
        ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    std::string out = "dim=" + std::to_string(dim) + "\n";
    for (const std::string& id : ids) {
        out += id;
        out += '\t';
        const std::vector<double>& v = vectors.at(id);
        for (size_t j = 0; j < v.size(); ++j) {
            if (j) out += ' ';
            out += format_double(v[j]);
        }
        out += '\n';
    }
    write_file(path, out);
}

class PrecomputedProvider : public IFeatureProvider {
public:
    PrecomputedProvider(const std::string& path, size_t expected_dim = 0)
        : vectors_(load_precomputed(path, expected_dim)) {
        dim_ = expected_dim;
        if (dim_ == 0) {
            if (vectors_.empty())
                throw std::runtime_error(path + ": empty table needs an explicit dimension");
            dim_ = vectors_.begin()->second.size();
        }
    }

    size_t dimension() const override { return dim_; }
    std::string kind() const override { return "precomputed-file"; }

    // Items without a row count as a missing modality.
    FeatureVector features(const NewsItem& item) const override {
        FeatureVector fv;
        auto it = vectors_.find(item.id);
        if (it == vectors_.end()) {
            fv.values.assign(dim_, 0.0);
            fv.present = false;
            return fv;
        }
        fv.values = it->second;
        return fv;
    }

    size_t size() const { return vectors_.size(); }

private:
    std::unordered_map<std::string, std::vector<double>> vectors_;
    size_t dim_;
};

// Channel statistics for P6 PPM images (means, variances, luminance
// histogram), raw byte statistics for anything else. A desk-scale stand-in,
// not an image model; absent image_ref means a missing modality.
class ImageStatsProvider : public IFeatureProvider {
public:
    explicit ImageStatsProvider(size_t dim, std::string base_dir = "")
        : dim_(dim), base_dir_(std::move(base_dir)) {
        if (dim < 8) throw std::invalid_argument("ImageStatsProvider: dim must be >= 8");
    }

    size_t dimension() const override { return dim_; }
    std::string kind() const override { return "image-stats"; }

    FeatureVector features(const NewsItem& item) const override {
        FeatureVector fv;
        fv.values.assign(dim_, 0.0);
        if (!item.image_ref) {
            fv.present = false;
            return fv;
        }
        std::string path =
            base_dir_.empty() ? *item.image_ref : base_dir_ + "/" + *item.image_ref;
        std::string bytes = read_file(path);
        if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6')
            ppm_stats(bytes, path, fv.values);
        else
            byte_stats(bytes, fv.values);
        double n = l2_norm(fv.values);
        if (n > 0.0)
            for (double& v : fv.values) v /= n;
        return fv;
    }

private:
    void ppm_stats(const std::string& bytes, const std::string& path,
                   std::vector<double>& out) const {
        size_t pos = 2;
        auto next_int = [&]() -> long {
            while (pos < bytes.size()) {
                char c = bytes[pos];
                if (c == '#') {
                    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                    ++pos;
                } else {
                    break;
                }
            }
            size_t start = pos;
            while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') ++pos;
            if (pos == start) throw std::runtime_error(path + ": malformed PPM header");
            return parse_long(std::string_view(bytes).substr(start, pos - start), path);
        };
        long w = next_int(), h = next_int(), maxval = next_int();
        if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
            throw std::runtime_error(path + ": unsupported PPM geometry");
        ++pos;  // single whitespace after maxval
        size_t need = static_cast<size_t>(w) * static_cast<size_t>(h) * 3;
        if (bytes.size() - pos < need)
            throw std::runtime_error(path + ": truncated PPM pixel data");
        double scale = 1.0 / static_cast<double>(maxval);
        double mean[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
        size_t pixels = static_cast<size_t>(w) * static_cast<size_t>(h);
        size_t bins = dim_ - 6;
        std::vector<double> hist(bins, 0.0);
        for (size_t p = 0; p < pixels; ++p) {
            double rgb[3];
            for (int c = 0; c < 3; ++c) {
                double v = static_cast<unsigned char>(bytes[pos + p * 3 + c]) * scale;
                rgb[c] = v;
                mean[c] += v;
                sq[c] += v * v;
            }
            double lum = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
            size_t bin = std::min(bins - 1, static_cast<size_t>(lum * static_cast<double>(bins)));
            hist[bin] += 1.0;
        }
        double n = static_cast<double>(pixels);
        for (int c = 0; c < 3; ++c) {
            out[c] = mean[c] / n;
            out[3 + c] = sq[c] / n - out[c] * out[c];
        }
        for (size_t b = 0; b < bins; ++b) out[6 + b] = hist[b] / n;
    }

    void byte_stats(const std::string& bytes, std::vector<double>& out) const {
        if (bytes.empty()) return;
        double mean = 0.0, sq = 0.0;
        size_t bins = dim_ - 2;
        std::vector<double> hist(bins, 0.0);
        for (unsigned char c : bytes) {
            double v = c / 255.0;
            mean += v;
            sq += v * v;
            size_t bin = std::min(bins - 1, static_cast<size_t>(v * static_cast<double>(bins)));
            hist[bin] += 1.0;
        }
        double n = static_cast<double>(bytes.size());
        out[0] = mean / n;
        out[1] = sq / n - out[0] * out[0];
        for (size_t b = 0; b < bins; ++b) out[2 + b] = hist[b] / n;
    }

    size_t dim_;
    std::string base_dir_;
};

// Pools TransE embeddings over the one-hop subgraph of an item's entities.
// Unknown entities are skipped with a warning; items with no known entity get
// the zero vector and count as a missing modality.
class KnowledgeFeatureProvider : public IFeatureProvider {
public:
    KnowledgeFeatureProvider(std::shared_ptr<const KnowledgeStore> store,
                             std::shared_ptr<const EmbeddingTable> table,
                             std::function<void(const std::string&)> warn = nullptr)
        : store_(std::move(store)), table_(std::move(table)), warn_(std::move(warn)) {
        if (!store_ || !table_)
            throw std::invalid_argument("KnowledgeFeatureProvider: null store or table");
        if (table_->entities.size() != store_->entity_names.size())
            throw std::invalid_argument(
                "KnowledgeFeatureProvider: embedding table does not cover the store");
    }

    size_t dimension() const override { return table_->dk; }
    std::string kind() const override { return "knowledge-pool"; }

    FeatureVector features(const NewsItem& item) const override {
        std::set<size_t> ids;
        for (const EntityMention& m : item.entities) {
            auto id = store_->entity_id(m.name);
            if (!id) {
                if (warn_)
                    warn_("unknown entity '" + m.name + "' on item " + item.id +
                          ", contributing nothing");
                continue;
            }
            ids.insert(*id);
        }
        FeatureVector fv;
        if (ids.empty()) {
            fv.values.assign(table_->dk, 0.0);
            fv.present = false;
            return fv;
        }
        fv.values = pool_graph_feature(extract_subgraph(ids, *store_), *table_);
        return fv;
    }

private:
    std::shared_ptr<const KnowledgeStore> store_;
    std::shared_ptr<const EmbeddingTable> table_;
    std::function<void(const std::string&)> warn_;
};

// Projection layers for the three modalities, text -> visual -> knowledge.
struct FusionParams {
    LayerParams text_proj, visual_proj, knowledge_proj;

    size_t fused_dim() const {
        return text_proj.out_dim() + visual_proj.out_dim() + knowledge_proj.out_dim();
    }
};

inline FusionParams init_fusion(size_t d1, size_t d2, size_t dk, size_t d1p, size_t d2p,
                                size_t dkp, Rng& rng) {
    if (d1p == 0 || d2p == 0 || dkp == 0)
        throw std::invalid_argument("init_fusion: projected dims must be > 0");
    FusionParams p;
    p.text_proj = init_layer(d1, d1p, Activation::relu, rng);
    p.visual_proj = init_layer(d2, d2p, Activation::relu, rng);
    p.knowledge_proj = init_layer(dk, dkp, Activation::relu, rng);
    return p;
}

// One batch of per-modality features, one row per item. Mask 0 marks a row
// whose modality is missing.
struct ModalityBatch {
    DenseMatrix text, visual, knowledge;
    std::vector<uint8_t> text_mask, visual_mask, knowledge_mask;

    size_t rows() const { return text.rows; }
};

inline ModalityBatch build_batch(const std::vector<NewsItem>& items,
                                 const IFeatureProvider* text_provider,
                                 const IFeatureProvider* visual_provider,
                                 const IFeatureProvider* knowledge_provider, size_t d1, size_t d2,
                                 size_t dk) {
    ModalityBatch b;
    size_t n = items.size();
    b.text = DenseMatrix(n, d1);
    b.visual = DenseMatrix(n, d2);
    b.knowledge = DenseMatrix(n, dk);
    b.text_mask.assign(n, 0);
    b.visual_mask.assign(n, 0);
    b.knowledge_mask.assign(n, 0);
    auto fill = [&](const IFeatureProvider* p, size_t dim, DenseMatrix& m,
                    std::vector<uint8_t>& mask, const char* what) {
        if (!p) return;
        if (p->dimension() != dim)
            throw std::invalid_argument(std::string("build_batch: ") + what + " provider emits " +
                                        std::to_string(p->dimension()) + ", model expects " +
                                        std::to_string(dim));
        for (size_t i = 0; i < n; ++i) {
            FeatureVector fv = p->features(items[i]);
            if (fv.values.size() != dim)
                throw std::runtime_error(std::string("build_batch: ") + what +
                                         " provider broke its dimension contract on item " +
                                         items[i].id);
            for (double v : fv.values)
                if (!std::isfinite(v))
                    throw std::runtime_error(std::string("build_batch: non-finite ") + what +
                                             " feature on item " + items[i].id);
            m.set_row(i, fv.values);
            mask[i] = fv.present ? 1 : 0;
        }
    };
    fill(text_provider, d1, b.text, b.text_mask, "text");
    fill(visual_provider, d2, b.visual, b.visual_mask, "visual");
    fill(knowledge_provider, dk, b.knowledge, b.knowledge_mask, "knowledge");
    return b;
}

inline ModalityBatch take_rows(const ModalityBatch& b, const std::vector<size_t>& rows) {
    ModalityBatch out;
    out.text = DenseMatrix(rows.size(), b.text.cols);
    out.visual = DenseMatrix(rows.size(), b.visual.cols);
    out.knowledge = DenseMatrix(rows.size(), b.knowledge.cols);
    out.text_mask.resize(rows.size());
    out.visual_mask.resize(rows.size());
    out.knowledge_mask.resize(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        size_t r = rows[i];
        if (r >= b.rows()) throw std::invalid_argument("take_rows: row out of range");
        out.text.set_row(i, b.text.row(r));
        out.visual.set_row(i, b.visual.row(r));
        out.knowledge.set_row(i, b.knowledge.row(r));
        out.text_mask[i] = b.text_mask[r];
        out.visual_mask[i] = b.visual_mask[r];
        out.knowledge_mask[i] = b.knowledge_mask[r];
    }
    return out;
}

inline ModalityBatch concat_batches(const ModalityBatch& a, const ModalityBatch& b) {
    if (a.text.cols != b.text.cols || a.visual.cols != b.visual.cols ||
        a.knowledge.cols != b.knowledge.cols)
        throw std::invalid_argument("concat_batches: modality dims differ");
    ModalityBatch out;
    size_t n = a.rows() + b.rows();
    out.text = DenseMatrix(n, a.text.cols);
    out.visual = DenseMatrix(n, a.visual.cols);
    out.knowledge = DenseMatrix(n, a.knowledge.cols);
    auto copy_rows = [n](const DenseMatrix& src, DenseMatrix& dst, size_t at) {
        (void)n;
        for (size_t i = 0; i < src.rows; ++i) dst.set_row(at + i, src.row(i));
    };
    copy_rows(a.text, out.text, 0);
    copy_rows(b.text, out.text, a.rows());
    copy_rows(a.visual, out.visual, 0);
    copy_rows(b.visual, out.visual, a.rows());
    copy_rows(a.knowledge, out.knowledge, 0);
    copy_rows(b.knowledge, out.knowledge, a.rows());
    auto cat = [](const std::vector<uint8_t>& x, const std::vector<uint8_t>& y) {
        std::vector<uint8_t> m = x;
        m.insert(m.end(), y.begin(), y.end());
        return m;
    };
    out.text_mask = cat(a.text_mask, b.text_mask);
    out.visual_mask = cat(a.visual_mask, b.visual_mask);
    out.knowledge_mask = cat(a.knowledge_mask, b.knowledge_mask);
    return out;
}

// h_I = [h_t' ; h_v' ; h_kg'], each block projected then masked so missing
// modalities contribute exactly zero.
inline Tensor fuse(GradTape& tape, const ModalityBatch& batch, FusionParams& p) {
    Tensor ht = mask_rows(tape, dense_forward(tape, make_constant(batch.text), p.text_proj),
                          batch.text_mask);
    Tensor hv = mask_rows(tape, dense_forward(tape, make_constant(batch.visual), p.visual_proj),
                          batch.visual_mask);
    Tensor hk = mask_rows(
        tape, dense_forward(tape, make_constant(batch.knowledge), p.knowledge_proj),
        batch.knowledge_mask);
    return concat_cols(tape, ht, hv, hk);
}

}  // namespace kean
