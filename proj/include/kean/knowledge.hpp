#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kean/matrix.hpp"
#include "kean/rng.hpp"
#include "kean/util.hpp"

namespace kean {

// Knowledge graph: entity/relation vocabularies, (head, relation, tail)
// triplets between entities, and (entity, description-relation, free text)
// attribute triplets. Attribute objects are text, so they are stored and
// exported but never enter embedding training.
struct KnowledgeStore {
    std::vector<std::string> entity_names;
    std::vector<std::string> relation_names;
    std::unordered_map<std::string, size_t> entity_ids;
    std::unordered_map<std::string, size_t> relation_ids;

    struct Triplet {
        size_t head, relation, tail;
        bool operator==(const Triplet& o) const {
            return head == o.head && relation == o.relation && tail == o.tail;
        }
    };
    struct Attribute {
        size_t entity, relation;
        std::string text;
    };

    std::vector<Triplet> triplets;
    std::vector<Attribute> attributes;

    size_t intern_entity(const std::string& name) {
        auto it = entity_ids.find(name);
        if (it != entity_ids.end()) return it->second;
        entity_ids.emplace(name, entity_names.size());
        entity_names.push_back(name);
        return entity_names.size() - 1;
    }

    size_t intern_relation(const std::string& name) {
        auto it = relation_ids.find(name);
        if (it != relation_ids.end()) return it->second;
        relation_ids.emplace(name, relation_names.size());
        relation_names.push_back(name);
        return relation_names.size() - 1;
    }

    // Exact duplicates are dropped; returns whether the triplet was new.
    bool add_triplet(size_t h, size_t r, size_t t) {
        if (h >= entity_names.size() || t >= entity_names.size())
            throw std::invalid_argument("add_triplet: entity id out of range");
        if (r >= relation_names.size())
            throw std::invalid_argument("add_triplet: relation id out of range");
        if (!triplet_set_.insert({h, r, t}).second) return false;
        triplets.push_back({h, r, t});
        return true;
    }

    void add_attribute(size_t e, size_t r, std::string text) {
        if (e >= entity_names.size())
            throw std::invalid_argument("add_attribute: entity id out of range");
        if (r >= relation_names.size())
            throw std::invalid_argument("add_attribute: relation id out of range");
        attributes.push_back({e, r, std::move(text)});
    }

    bool has_triplet(size_t h, size_t r, size_t t) const {
        return triplet_set_.count({h, r, t}) > 0;
    }

    std::optional<size_t> entity_id(const std::string& name) const {
        auto it = entity_ids.find(name);
        if (it == entity_ids.end()) return std::nullopt;
        return it->second;
    }

private:
    std::set<std::array<size_t, 3>> triplet_set_;
};

// One-hop neighborhood. Nodes are kept sorted so every consumer sees the same
// order; isolated query entities stay as singleton nodes.
struct SubGraph {
    std::set<size_t> nodes;
    std::vector<KnowledgeStore::Triplet> triplets;
};

inline SubGraph extract_subgraph(const std::set<size_t>& entity_ids, const KnowledgeStore& store) {
    for (size_t id : entity_ids)
        if (id >= store.entity_names.size())
            throw std::invalid_argument("extract_subgraph: unknown entity id " + std::to_string(id));
    SubGraph g;
    g.nodes = entity_ids;
    for (const auto& t : store.triplets) {
        bool head_in = entity_ids.count(t.head) > 0;
        bool tail_in = entity_ids.count(t.tail) > 0;
        if (!head_in && !tail_in) continue;
        g.triplets.push_back(t);
        g.nodes.insert(t.head);
        g.nodes.insert(t.tail);
    }
    return g;
}

inline SubGraph extract_subgraph(const std::vector<std::string>& names,
                                 const KnowledgeStore& store) {
    std::set<size_t> ids;
    for (const std::string& n : names) {
        auto id = store.entity_id(n);
        if (!id) throw std::invalid_argument("extract_subgraph: unknown entity " + n);
        ids.insert(*id);
    }
    return extract_subgraph(ids, store);
}

struct EmbeddingTable {
    size_t dk = 0;
    std::vector<std::vector<double>> entities;
    std::vector<std::vector<double>> relations;
};

struct TransEConfig {
    size_t dk = 50;
    double margin = 1.0;
    size_t epochs = 100;
    double learning_rate = 0.01;
    size_t negatives_per_positive = 1;
    // 0 trains full-batch on corruptions fixed at start, which keeps the
    // epoch loss non-increasing; > 0 is per-batch SGD with fresh corruptions.
    size_t batch_size = 0;
};

// ||h + r - t||_2
inline double transe_score(const std::vector<double>& h, const std::vector<double>& r,
                           const std::vector<double>& t) {
    if (h.size() != r.size() || h.size() != t.size())
        throw std::invalid_argument("transe_score: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < h.size(); ++i) {
        double d = h[i] + r[i] - t[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline void l2_normalize_rows(std::vector<std::vector<double>>& rows) {
    for (auto& v : rows) {
        double n = l2_norm(v);
        if (n > 0.0)
            for (double& x : v) x /= n;
    }
}

struct TransEResult {
    EmbeddingTable table;
    // margin loss over the whole triplet set at the start of each epoch
    std::vector<double> epoch_losses;
};

namespace detail {

struct CorruptPair {
    KnowledgeStore::Triplet pos;
    KnowledgeStore::Triplet neg;
};

// Uniformly corrupt head or tail, redrawing while the corruption exists in the
// store (bounded; a pathological dense store just keeps the last draw).
inline CorruptPair corrupt(const KnowledgeStore::Triplet& t, const KnowledgeStore& store,
                           Rng& rng) {
    CorruptPair p{t, t};
    bool corrupt_head = rng.coin();
    size_t n = store.entity_names.size();
    for (int attempt = 0; attempt < 100; ++attempt) {
        size_t e = rng.index(n);
        if (corrupt_head)
            p.neg = {e, t.relation, t.tail};
        else
            p.neg = {t.head, t.relation, e};
        if (!store.has_triplet(p.neg.head, p.neg.relation, p.neg.tail)) break;
    }
    return p;
}

inline double pair_loss(const CorruptPair& p, const EmbeddingTable& tbl, double margin) {
    double pos = transe_score(tbl.entities[p.pos.head], tbl.relations[p.pos.relation],
                              tbl.entities[p.pos.tail]);
    double neg = transe_score(tbl.entities[p.neg.head], tbl.relations[p.neg.relation],
                              tbl.entities[p.neg.tail]);
    double l = margin + pos - neg;
    return l > 0.0 ? l : 0.0;
}

// Subgradient of the margin loss for one pair, accumulated into flat buffers.
inline void pair_grad(const CorruptPair& p, const EmbeddingTable& tbl, double margin, double scale,
                      std::vector<std::vector<double>>& ge, std::vector<std::vector<double>>& gr) {
    const auto& hp = tbl.entities[p.pos.head];
    const auto& rp = tbl.relations[p.pos.relation];
    const auto& tp = tbl.entities[p.pos.tail];
    const auto& hn = tbl.entities[p.neg.head];
    const auto& rn = tbl.relations[p.neg.relation];
    const auto& tn = tbl.entities[p.neg.tail];
    double spos = transe_score(hp, rp, tp);
    double sneg = transe_score(hn, rn, tn);
    if (margin + spos - sneg <= 0.0) return;
    size_t dk = hp.size();
    if (spos > 0.0) {
        for (size_t i = 0; i < dk; ++i) {
            double d = (hp[i] + rp[i] - tp[i]) / spos * scale;
            ge[p.pos.head][i] += d;
            gr[p.pos.relation][i] += d;
            ge[p.pos.tail][i] -= d;
        }
    }
    if (sneg > 0.0) {
        for (size_t i = 0; i < dk; ++i) {
            double d = (hn[i] + rn[i] - tn[i]) / sneg * scale;
            ge[p.neg.head][i] -= d;
            gr[p.neg.relation][i] -= d;
            ge[p.neg.tail][i] += d;
        }
    }
}

}  // namespace detail

inline TransEResult transe_train(const KnowledgeStore& store, const TransEConfig& cfg,
                                 uint64_t seed) {
    if (store.triplets.empty()) throw std::invalid_argument("transe_train: no relation triplets");
    if (cfg.dk == 0) throw std::invalid_argument("transe_train: dk must be > 0");
    if (cfg.margin <= 0.0) throw std::invalid_argument("transe_train: margin must be > 0");

    Rng rng(seed);
    TransEResult res;
    EmbeddingTable& tbl = res.table;
    tbl.dk = cfg.dk;
    double bound = 6.0 / std::sqrt(static_cast<double>(cfg.dk));
    tbl.entities.assign(store.entity_names.size(), std::vector<double>(cfg.dk));
    tbl.relations.assign(store.relation_names.size(), std::vector<double>(cfg.dk));
    for (auto& v : tbl.entities)
        for (double& x : v) x = rng.uniform(-bound, bound);
    for (auto& v : tbl.relations)
        for (double& x : v) x = rng.uniform(-bound, bound);
    l2_normalize_rows(tbl.relations);
    l2_normalize_rows(tbl.entities);

    std::vector<std::vector<double>> ge, gr;
    auto zero_grads = [&]() {
        ge.assign(tbl.entities.size(), std::vector<double>(cfg.dk, 0.0));
        gr.assign(tbl.relations.size(), std::vector<double>(cfg.dk, 0.0));
    };
    auto apply = [&](double lr_over_n) {
        for (size_t e = 0; e < tbl.entities.size(); ++e)
            for (size_t i = 0; i < cfg.dk; ++i) tbl.entities[e][i] -= lr_over_n * ge[e][i];
        for (size_t r = 0; r < tbl.relations.size(); ++r)
            for (size_t i = 0; i < cfg.dk; ++i) tbl.relations[r][i] -= lr_over_n * gr[r][i];
    };

    if (cfg.batch_size == 0) {
        // Fixed objective: corruptions drawn once, one mean-gradient step per
        // epoch. Renormalizing to the unit sphere keeps only the tangential
        // gradient component to first order, so the epoch loss cannot climb.
        std::vector<detail::CorruptPair> pairs;
        for (const auto& t : store.triplets)
            for (size_t k = 0; k < cfg.negatives_per_positive; ++k)
                pairs.push_back(detail::corrupt(t, store, rng));
        for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            double loss = 0.0;
            for (const auto& p : pairs) loss += detail::pair_loss(p, tbl, cfg.margin);
            res.epoch_losses.push_back(loss / static_cast<double>(pairs.size()));
            zero_grads();
            for (const auto& p : pairs)
                detail::pair_grad(p, tbl, cfg.margin, 1.0 / static_cast<double>(pairs.size()), ge,
                                  gr);
            apply(cfg.learning_rate);
            l2_normalize_rows(tbl.entities);
        }
    } else {
        for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            std::vector<detail::CorruptPair> pairs;
            for (const auto& t : store.triplets)
                for (size_t k = 0; k < cfg.negatives_per_positive; ++k)
                    pairs.push_back(detail::corrupt(t, store, rng));
            double loss = 0.0;
            for (const auto& p : pairs) loss += detail::pair_loss(p, tbl, cfg.margin);
            res.epoch_losses.push_back(loss / static_cast<double>(pairs.size()));
            rng.shuffle(pairs);
            for (size_t begin = 0; begin < pairs.size(); begin += cfg.batch_size) {
                size_t end = std::min(begin + cfg.batch_size, pairs.size());
                zero_grads();
                for (size_t i = begin; i < end; ++i)
                    detail::pair_grad(pairs[i], tbl, cfg.margin,
                                      1.0 / static_cast<double>(end - begin), ge, gr);
                apply(cfg.learning_rate);
            }
            l2_normalize_rows(tbl.entities);
        }
    }
    return res;
}

// Mean of node embeddings; empty graphs pool to the zero vector.
inline std::vector<double> pool_graph_feature(const SubGraph& g, const EmbeddingTable& tbl) {
    std::vector<double> out(tbl.dk, 0.0);
    if (g.nodes.empty()) return out;
    for (size_t id : g.nodes) {
        if (id >= tbl.entities.size())
            throw std::invalid_argument("pool_graph_feature: node " + std::to_string(id) +
                                        " has no embedding");
        for (size_t i = 0; i < tbl.dk; ++i) out[i] += tbl.entities[id][i];
    }
    double n = static_cast<double>(g.nodes.size());
    for (double& v : out) v /= n;
    return out;
}

// Filtered ranking quality: for every triplet, rank the true head and the true
// tail against all entities, ignoring candidates that form another true
// triplet. Returns the fraction of queries ranked in the top k.
inline double filtered_hits_at_k(const KnowledgeStore& store, const EmbeddingTable& tbl,
                                 size_t k) {
    if (store.triplets.empty()) throw std::invalid_argument("filtered_hits_at_k: empty store");
    size_t hits = 0, queries = 0;
    for (const auto& t : store.triplets) {
        double true_score =
            transe_score(tbl.entities[t.head], tbl.relations[t.relation], tbl.entities[t.tail]);
        for (int side = 0; side < 2; ++side) {
            size_t better = 0;
            for (size_t e = 0; e < tbl.entities.size(); ++e) {
                size_t h = side == 0 ? e : t.head;
                size_t tt = side == 0 ? t.tail : e;
                if (h == t.head && tt == t.tail) continue;
                if (store.has_triplet(h, t.relation, tt)) continue;
                double s = transe_score(tbl.entities[h], tbl.relations[t.relation],
                                        tbl.entities[tt]);
                if (s < true_score) ++better;
            }
            if (better < k) ++hits;
            ++queries;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(queries);
}

// head<TAB>relation<TAB>tail, one per line. Blank lines are skipped; short
// rows are rejected with their line number.
inline KnowledgeStore load_triplet_file(const std::string& path) {
    KnowledgeStore store;
    std::vector<std::string> lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::vector<std::string> f = split_on(lines[i], '\t');
        if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty())
            throw std::runtime_error(path + ":" + std::to_string(i + 1) +
                                     ": expected head<TAB>relation<TAB>tail");
        size_t h = store.intern_entity(f[0]);
        size_t r = store.intern_relation(f[1]);
        size_t t = store.intern_entity(f[2]);
        store.add_triplet(h, r, t);
    }
    return store;
}

// entity<TAB>rel_d<TAB>description; free text may contain further tabs.
inline void load_attribute_file(const std::string& path, KnowledgeStore& store) {
    std::vector<std::string> lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const std::string& line = lines[i];
        size_t p1 = line.find('\t');
        size_t p2 = p1 == std::string::npos ? std::string::npos : line.find('\t', p1 + 1);
        if (p2 == std::string::npos || p1 == 0 || p2 == p1 + 1 || p2 + 1 >= line.size())
            throw std::runtime_error(path + ":" + std::to_string(i + 1) +
                                     ": expected entity<TAB>rel_d<TAB>description");
        size_t e = store.intern_entity(line.substr(0, p1));
        size_t r = store.intern_relation(line.substr(p1 + 1, p2 - p1 - 1));
        store.add_attribute(e, r, line.substr(p2 + 1));
    }
}

// Header `dk=<n> entities=<m> relations=<k>`, then one row per entity and one
// per relation in id order, `name<TAB>v1 v2 ... v_dk` with round-trip decimal
// text.
inline void export_embeddings(const EmbeddingTable& tbl, const KnowledgeStore& store,
                              const std::string& path) {
    if (tbl.entities.size() != store.entity_names.size() ||
        tbl.relations.size() != store.relation_names.size())
        throw std::invalid_argument("export_embeddings: table does not match store");
    std::string out = "dk=" + std::to_string(tbl.dk) +
                      " entities=" + std::to_string(tbl.entities.size()) +
                      " relations=" + std::to_string(tbl.relations.size()) + "\n";
    auto emit = [&](const std::string& name, const std::vector<double>& v) {
        out += name;
        out += '\t';
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) out += ' ';
            out += format_double(v[i]);
        }
        out += '\n';
    };
    for (size_t e = 0; e < tbl.entities.size(); ++e) emit(store.entity_names[e], tbl.entities[e]);
    for (size_t r = 0; r < tbl.relations.size(); ++r)
        emit(store.relation_names[r], tbl.relations[r]);
    write_file(path, out);
}

inline void export_triplets(const KnowledgeStore& store, const std::string& path) {
    std::string out;
    for (const auto& t : store.triplets) {
        out += store.entity_names[t.head];
        out += '\t';
        out += store.relation_names[t.relation];
        out += '\t';
        out += store.entity_names[t.tail];
        out += '\n';
    }
    write_file(path, out);
}

inline void export_attributes(const KnowledgeStore& store, const std::string& path) {
    std::string out;
    for (const auto& a : store.attributes) {
        out += store.entity_names[a.entity];
        out += '\t';
        out += store.relation_names[a.relation];
        out += '\t';
        out += a.text;
        out += '\n';
    }
    write_file(path, out);
}

struct NamedEmbeddings {
    EmbeddingTable table;
    std::vector<std::string> entity_names;
    std::vector<std::string> relation_names;
    std::unordered_map<std::string, size_t> entity_ids;
};

inline NamedEmbeddings load_embeddings(const std::string& path) {
    std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ": empty embedding file");
    std::vector<std::string> head = split_whitespace(lines[0]);
    if (head.size() != 3 || head[0].rfind("dk=", 0) != 0 || head[1].rfind("entities=", 0) != 0 ||
        head[2].rfind("relations=", 0) != 0)
        throw std::runtime_error(path + ":1: expected dk=<n> entities=<m> relations=<k>");
    NamedEmbeddings ne;
    ne.table.dk = static_cast<size_t>(parse_long(head[0].substr(3), path + " header dk"));
    size_t m = static_cast<size_t>(parse_long(head[1].substr(9), path + " header entities"));
    size_t k = static_cast<size_t>(parse_long(head[2].substr(10), path + " header relations"));
    if (lines.size() < 1 + m + k)
        throw std::runtime_error(path + ": expected " + std::to_string(m + k) + " embedding rows");
    auto parse_row = [&](size_t lineno, std::string* name_out) {
        const std::string& line = lines[lineno];
        size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno + 1) + ": missing tab");
        *name_out = line.substr(0, tab);
        std::vector<std::string> parts = split_whitespace(line.substr(tab + 1));
        if (parts.size() != ne.table.dk)
            throw std::runtime_error(path + ":" + std::to_string(lineno + 1) + ": expected " +
                                     std::to_string(ne.table.dk) + " values");
        std::vector<double> v(parts.size());
        for (size_t i = 0; i < parts.size(); ++i)
            v[i] = parse_double(parts[i], path + ":" + std::to_string(lineno + 1));
        return v;
    };
    for (size_t e = 0; e < m; ++e) {
        std::string name;
        ne.table.entities.push_back(parse_row(1 + e, &name));
        if (!ne.entity_ids.emplace(name, e).second)
            throw std::runtime_error(path + ": duplicate entity " + name);
        ne.entity_names.push_back(name);
    }
    for (size_t r = 0; r < k; ++r) {
        std::string name;
        ne.table.relations.push_back(parse_row(1 + m + r, &name));
        ne.relation_names.push_back(name);
    }
    return ne;
}

// Reindex file-loaded embeddings to a store's entity/relation ids. Entities
// the file does not cover map to the zero vector with a warning.
inline EmbeddingTable align_embeddings(const NamedEmbeddings& ne, const KnowledgeStore& store,
                                       std::vector<std::string>* warnings = nullptr) {
    EmbeddingTable tbl;
    tbl.dk = ne.table.dk;
    tbl.entities.assign(store.entity_names.size(), std::vector<double>(tbl.dk, 0.0));
    tbl.relations.assign(store.relation_names.size(), std::vector<double>(tbl.dk, 0.0));
    for (size_t e = 0; e < store.entity_names.size(); ++e) {
        auto it = ne.entity_ids.find(store.entity_names[e]);
        if (it == ne.entity_ids.end()) {
            if (warnings)
                warnings->push_back("no embedding for entity '" + store.entity_names[e] +
                                    "', using zero vector");
            continue;
        }
        tbl.entities[e] = ne.table.entities[it->second];
    }
    for (size_t r = 0; r < store.relation_names.size(); ++r) {
        for (size_t i = 0; i < ne.relation_names.size(); ++i) {
            if (ne.relation_names[i] == store.relation_names[r]) {
                tbl.relations[r] = ne.table.relations[i];
                break;
            }
        }
    }
    return tbl;
}

}  // namespace kean
