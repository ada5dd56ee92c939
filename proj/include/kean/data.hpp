#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "kean/matrix.hpp"
#include "kean/rng.hpp"
#include "kean/util.hpp"

namespace kean {

enum class Topic { politics, entertainment, business, health, society, conflict };
enum class Platform { official, social, fact_check };
enum class BinaryLabel { real, fake };
enum class FineLabel {
    real,
    text_based_fake,
    image_based_fake,
    text_image_inconsistency,
    content_knowledge_inconsistency,
    other
};

inline const std::vector<std::string>& topic_tokens() {
    static const std::vector<std::string> t = {"politics", "entertainment", "business",
                                               "health",   "society",       "conflict"};
    return t;
}
inline const std::vector<std::string>& platform_tokens() {
    static const std::vector<std::string> t = {"official", "social", "fact-check"};
    return t;
}
inline const std::vector<std::string>& binary_label_tokens() {
    static const std::vector<std::string> t = {"real", "fake"};
    return t;
}
inline const std::vector<std::string>& fine_label_tokens() {
    static const std::vector<std::string> t = {"real",
                                               "text-based-fake",
                                               "image-based-fake",
                                               "text-image-inconsistency",
                                               "content-knowledge-inconsistency",
                                               "other"};
    return t;
}

namespace detail {
inline size_t enum_index(const std::string& value, const std::vector<std::string>& tokens,
                         const std::string& field) {
    for (size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == value) return i;
    throw std::invalid_argument(field + ": unknown value '" + value + "'");
}
}  // namespace detail

inline Topic topic_from_token(const std::string& s) {
    return static_cast<Topic>(detail::enum_index(s, topic_tokens(), "topic"));
}
inline Platform platform_from_token(const std::string& s) {
    return static_cast<Platform>(detail::enum_index(s, platform_tokens(), "platform"));
}
inline BinaryLabel binary_label_from_token(const std::string& s) {
    return static_cast<BinaryLabel>(detail::enum_index(s, binary_label_tokens(), "binary_label"));
}
inline FineLabel fine_label_from_token(const std::string& s) {
    return static_cast<FineLabel>(detail::enum_index(s, fine_label_tokens(), "fine_label"));
}

inline const std::string& token_of(Topic t) { return topic_tokens()[static_cast<size_t>(t)]; }
inline const std::string& token_of(Platform p) {
    return platform_tokens()[static_cast<size_t>(p)];
}
inline const std::string& token_of(BinaryLabel b) {
    return binary_label_tokens()[static_cast<size_t>(b)];
}
inline const std::string& token_of(FineLabel f) {
    return fine_label_tokens()[static_cast<size_t>(f)];
}

struct EntityMention {
    std::string name;
    double confidence = 1.0;
    bool operator==(const EntityMention& o) const {
        return name == o.name && confidence == o.confidence;
    }
};

// One news record. fine_label=real and binary_label=real imply each other;
// the five non-real fine categories all count as binary fake.
struct NewsItem {
    std::string id;
    std::string text;
    std::optional<std::string> image_ref;
    std::vector<EntityMention> entities;
    Topic topic = Topic::politics;
    Platform platform = Platform::official;
    BinaryLabel binary_label = BinaryLabel::real;
    FineLabel fine_label = FineLabel::real;
    std::map<std::string, std::string> metadata;

    bool operator==(const NewsItem& o) const {
        return id == o.id && text == o.text && image_ref == o.image_ref &&
               entities == o.entities && topic == o.topic && platform == o.platform &&
               binary_label == o.binary_label && fine_label == o.fine_label &&
               metadata == o.metadata;
    }
};

namespace detail {

inline NewsItem item_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw std::runtime_error(where + ": record is not an object");
    static const std::set<std::string> known = {"id",       "text",         "image_ref",
                                                "entities", "topic",        "platform",
                                                "binary_label", "fine_label", "metadata"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::runtime_error(where + ": unknown field '" + it.key() + "'");
    for (const char* req : {"id", "text", "entities", "topic", "platform", "binary_label",
                            "fine_label", "metadata"})
        if (!j.contains(req)) throw std::runtime_error(where + ": missing field '" + req + "'");

    NewsItem item;
    try {
        item.id = j.at("id").get<std::string>();
        if (item.id.empty()) throw std::runtime_error("id: must be nonempty");
        item.text = j.at("text").get<std::string>();
        if (j.contains("image_ref") && !j.at("image_ref").is_null())
            item.image_ref = j.at("image_ref").get<std::string>();
        for (const auto& e : j.at("entities")) {
            EntityMention m;
            m.name = e.at("name").get<std::string>();
            m.confidence = e.at("confidence").get<double>();
            if (!(m.confidence >= 0.0 && m.confidence <= 1.0))
                throw std::runtime_error("entities: confidence out of [0,1] for '" + m.name + "'");
            item.entities.push_back(std::move(m));
        }
        item.topic = topic_from_token(j.at("topic").get<std::string>());
        item.platform = platform_from_token(j.at("platform").get<std::string>());
        item.binary_label = binary_label_from_token(j.at("binary_label").get<std::string>());
        item.fine_label = fine_label_from_token(j.at("fine_label").get<std::string>());
        for (auto it = j.at("metadata").begin(); it != j.at("metadata").end(); ++it)
            item.metadata[it.key()] = it.value().get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
        throw std::runtime_error(where + ": " + ex.what());
    } catch (const std::exception& ex) {
        throw std::runtime_error(where + ": " + ex.what());
    }
    if ((item.fine_label == FineLabel::real) != (item.binary_label == BinaryLabel::real))
        throw std::runtime_error(where +
                                 ": fine_label: 'real' must pair with binary_label 'real'");
    return item;
}

inline nlohmann::json item_to_json(const NewsItem& item) {
    nlohmann::json j;
    j["id"] = item.id;
    j["text"] = item.text;
    if (item.image_ref)
        j["image_ref"] = *item.image_ref;
    else
        j["image_ref"] = nullptr;
    j["entities"] = nlohmann::json::array();
    for (const auto& e : item.entities)
        j["entities"].push_back({{"name", e.name}, {"confidence", e.confidence}});
    j["topic"] = token_of(item.topic);
    j["platform"] = token_of(item.platform);
    j["binary_label"] = token_of(item.binary_label);
    j["fine_label"] = token_of(item.fine_label);
    j["metadata"] = nlohmann::json::object();
    for (const auto& [k, v] : item.metadata) j["metadata"][k] = v;
    return j;
}

}  // namespace detail

// Newline-delimited records, one object per line. Errors carry path:line.
inline std::vector<NewsItem> ingest(const std::string& path) {
    std::vector<std::string> lines = read_lines(path);
    std::vector<NewsItem> items;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::string where = path + ":" + std::to_string(i + 1);
        nlohmann::json j = nlohmann::json::parse(lines[i], nullptr, false);
        if (j.is_discarded()) throw std::runtime_error(where + ": malformed record");
        items.push_back(detail::item_from_json(j, where));
    }
    return items;
}

inline void export_items(const std::vector<NewsItem>& items, const std::string& path) {
    std::string out;
    for (const NewsItem& item : items) {
        out += detail::item_to_json(item).dump();
        out += '\n';
    }
    write_file(path, out);
}

struct DropRecord {
    std::string id;
    std::string reason;   // "exact-duplicate", "near-duplicate", "short-text"
    std::string kept_id;  // duplicate-of target, empty for quality drops
};

struct FilterResult {
    std::vector<NewsItem> kept;
    std::vector<DropRecord> dropped;
};

namespace detail {

// Word 5-gram shingles over the normalized text; shorter texts shrink to one
// shingle so near-duplicate comparison stays defined.
inline std::set<std::string> shingles(const std::string& text) {
    std::vector<std::string> toks = split_whitespace(normalize_text(text));
    std::set<std::string> out;
    if (toks.empty()) return out;
    const size_t n = 5;
    if (toks.size() < n) {
        std::string joined;
        for (const auto& t : toks) {
            if (!joined.empty()) joined.push_back(' ');
            joined += t;
        }
        out.insert(joined);
        return out;
    }
    for (size_t i = 0; i + n <= toks.size(); ++i) {
        std::string joined;
        for (size_t k = 0; k < n; ++k) {
            if (k) joined.push_back(' ');
            joined += toks[i + k];
        }
        out.insert(joined);
    }
    return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    size_t inter = 0;
    for (const auto& s : a) inter += b.count(s);
    size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace detail

// Exact duplicates by normalized text, then near-duplicates by 5-gram Jaccard
// >= threshold against already-kept items. Earliest occurrence wins, which
// also makes the pass idempotent.
inline FilterResult dedupe(const std::vector<NewsItem>& items, double threshold = 0.9) {
    FilterResult res;
    std::unordered_map<std::string, std::string> seen_exact;  // normalized text -> kept id
    std::vector<std::set<std::string>> kept_shingles;
    for (const NewsItem& item : items) {
        std::string norm = normalize_text(item.text);
        auto exact = seen_exact.find(norm);
        if (exact != seen_exact.end()) {
            res.dropped.push_back({item.id, "exact-duplicate", exact->second});
            continue;
        }
        std::set<std::string> sh = detail::shingles(item.text);
        std::string near_id;
        for (size_t k = 0; k < res.kept.size(); ++k) {
            if (detail::jaccard(sh, kept_shingles[k]) >= threshold) {
                near_id = res.kept[k].id;
                break;
            }
        }
        if (!near_id.empty()) {
            res.dropped.push_back({item.id, "near-duplicate", near_id});
            continue;
        }
        seen_exact.emplace(std::move(norm), item.id);
        kept_shingles.push_back(std::move(sh));
        res.kept.push_back(item);
    }
    return res;
}

inline FilterResult quality_filter(const std::vector<NewsItem>& items, size_t min_tokens = 5) {
    FilterResult res;
    for (const NewsItem& item : items) {
        if (split_whitespace(item.text).size() < min_tokens)
            res.dropped.push_back({item.id, "short-text", ""});
        else
            res.kept.push_back(item);
    }
    return res;
}

enum class SplitKind { classification_6_2_2, adaptation_9_1 };

struct SplitSpec {
    SplitKind kind = SplitKind::classification_6_2_2;
    uint64_t seed = 0;
    std::string stratify_by;  // "", "topic", "platform", "binary_label", "fine_label"
};

struct SplitResult {
    std::vector<size_t> train, val, test;  // indices into the input list
};

namespace detail {

inline std::string stratum_key(const NewsItem& item, const std::string& field) {
    if (field == "topic") return token_of(item.topic);
    if (field == "platform") return token_of(item.platform);
    if (field == "binary_label") return token_of(item.binary_label);
    if (field == "fine_label") return token_of(item.fine_label);
    throw std::invalid_argument("split: unknown stratify field '" + field + "'");
}

// Floor-sized val/test, remainder to train, from an already-shuffled order.
inline void cut(const std::vector<size_t>& order, SplitKind kind, SplitResult& out) {
    size_t n = order.size();
    size_t n_val = 0, n_test = 0;
    if (kind == SplitKind::classification_6_2_2) {
        n_val = n / 5;
        n_test = n / 5;
    } else {
        n_val = n / 10;
    }
    size_t n_train = n - n_val - n_test;
    for (size_t i = 0; i < n_train; ++i) out.train.push_back(order[i]);
    for (size_t i = 0; i < n_val; ++i) out.val.push_back(order[n_train + i]);
    for (size_t i = 0; i < n_test; ++i) out.test.push_back(order[n_train + n_val + i]);
}

}  // namespace detail

inline SplitResult split(const std::vector<NewsItem>& items, const SplitSpec& spec) {
    size_t min_items = spec.kind == SplitKind::classification_6_2_2 ? 10 : 2;
    if (items.size() < min_items)
        throw std::invalid_argument("split: need at least " + std::to_string(min_items) +
                                    " items, got " + std::to_string(items.size()));
    Rng rng(spec.seed);
    SplitResult out;
    if (spec.stratify_by.empty()) {
        std::vector<size_t> order(items.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        detail::cut(order, spec.kind, out);
        return out;
    }
    std::map<std::string, std::vector<size_t>> strata;  // sorted keys: stable order
    for (size_t i = 0; i < items.size(); ++i)
        strata[detail::stratum_key(items[i], spec.stratify_by)].push_back(i);
    for (auto& [key, order] : strata) {
        rng.shuffle(order);
        detail::cut(order, spec.kind, out);
    }
    return out;
}

struct EntityFilterResult {
    std::vector<EntityMention> accepted, review, rejected;
};

// Two-threshold triage: confident mentions pass, hopeless ones drop, the band
// in between goes to a human review queue.
inline EntityFilterResult entity_filter(const std::vector<EntityMention>& candidates, double w1,
                                        double w2) {
    if (!(w1 >= 0.0 && w1 < w2 && w2 <= 1.0))
        throw std::invalid_argument("entity_filter: need 0 <= w1 < w2 <= 1");
    EntityFilterResult res;
    for (const EntityMention& m : candidates) {
        if (m.confidence >= w2)
            res.accepted.push_back(m);
        else if (m.confidence < w1)
            res.rejected.push_back(m);
        else
            res.review.push_back(m);
    }
    return res;
}

// Items x categories assignment counts with a constant rater count per item.
struct AnnotationMatrix {
    size_t raters = 0;
    std::vector<std::string> categories;  // column names, sorted
    DenseMatrix counts;                   // items x categories
};

// item_id<TAB>rater_id<TAB>category. Every item must carry the same raters.
inline AnnotationMatrix load_annotations(const std::string& path) {
    std::vector<std::string> lines = read_lines(path);
    std::vector<std::string> item_order;
    std::map<std::string, std::map<std::string, std::string>> votes;  // item -> rater -> cat
    std::set<std::string> cats;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::vector<std::string> f = split_on(lines[i], '\t');
        if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty())
            throw std::runtime_error(path + ":" + std::to_string(i + 1) +
                                     ": expected item_id<TAB>rater_id<TAB>category");
        if (!votes.count(f[0])) item_order.push_back(f[0]);
        if (!votes[f[0]].emplace(f[1], f[2]).second)
            throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": rater '" + f[1] +
                                     "' rated item '" + f[0] + "' twice");
        cats.insert(f[2]);
    }
    if (item_order.empty()) throw std::runtime_error(path + ": no annotations");
    AnnotationMatrix m;
    m.categories.assign(cats.begin(), cats.end());
    m.raters = votes[item_order[0]].size();
    m.counts = DenseMatrix(item_order.size(), m.categories.size());
    std::map<std::string, size_t> cat_id;
    for (size_t c = 0; c < m.categories.size(); ++c) cat_id[m.categories[c]] = c;
    for (size_t i = 0; i < item_order.size(); ++i) {
        const auto& rv = votes[item_order[i]];
        if (rv.size() != m.raters)
            throw std::runtime_error(path + ": item '" + item_order[i] + "' has " +
                                     std::to_string(rv.size()) + " raters, expected " +
                                     std::to_string(m.raters));
        for (const auto& [rater, cat] : rv) m.counts(i, cat_id[cat]) += 1.0;
    }
    return m;
}

// kappa = (P-bar - Pe-bar) / (1 - Pe-bar), standard Fleiss definitions.
inline double fleiss_kappa(const AnnotationMatrix& a) {
    size_t items = a.counts.rows, k = a.counts.cols;
    double n = static_cast<double>(a.raters);
    if (items == 0) throw std::invalid_argument("fleiss_kappa: no items");
    if (a.raters < 2) throw std::invalid_argument("fleiss_kappa: need at least 2 raters");
    if (k < 2) throw std::invalid_argument("fleiss_kappa: need at least 2 categories");
    double p_bar = 0.0;
    std::vector<double> p_cat(k, 0.0);
    for (size_t i = 0; i < items; ++i) {
        double row = 0.0, agree = 0.0;
        for (size_t j = 0; j < k; ++j) {
            double c = a.counts(i, j);
            row += c;
            agree += c * c;
            p_cat[j] += c;
        }
        if (row != n)
            throw std::invalid_argument("fleiss_kappa: item " + std::to_string(i) + " has " +
                                        format_double(row) + " ratings, expected " +
                                        format_double(n));
        p_bar += (agree - n) / (n * (n - 1.0));
    }
    p_bar /= static_cast<double>(items);
    double pe_bar = 0.0;
    for (size_t j = 0; j < k; ++j) {
        double p = p_cat[j] / (static_cast<double>(items) * n);
        pe_bar += p * p;
    }
    if (1.0 - pe_bar < 1e-12)
        throw std::invalid_argument(
            "fleiss_kappa: expected agreement is 1 (all ratings in one category), "
            "kappa undefined");
    return (p_bar - pe_bar) / (1.0 - pe_bar);
}

}  // namespace kean
