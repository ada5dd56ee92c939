#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kean/data.hpp"
#include "kean/knowledge.hpp"
#include "kean/rng.hpp"

namespace kean {

// One synthetic domain: a constant feature offset of size delta along the
// shared direction (covariate shift) and its own label prior (label shift).
struct SynthDomain {
    std::string name;
    double delta = 0.0;
    std::vector<double> pi;
    std::string topic = "politics";
    std::string platform = "official";
};

struct SynthConfig {
    size_t categories = 2;
    size_t dim = 16;
    size_t samples_per_domain = 1000;
    double noise = 1.0;
    double class_separation = 2.0;
    // when set, emits a toy KG of per-category entity clusters and links each
    // item to entities of its own category, making h_kg label-informative
    bool with_knowledge = false;
    size_t entities_per_category = 5;
    uint64_t seed = 0;
    std::vector<SynthDomain> domains;
};

struct SynthResult {
    std::vector<NewsItem> items;
    std::vector<size_t> labels;     // category index per item
    std::vector<size_t> domain_of;  // domain index per item
    std::unordered_map<std::string, std::vector<double>> features;
    KnowledgeStore kg;  // empty unless cfg.with_knowledge
};

namespace detail {
inline void check_synth_config(const SynthConfig& cfg) {
    if (cfg.categories < 2 || cfg.categories > fine_label_tokens().size())
        throw std::invalid_argument("synth: categories must be in [2, 6]");
    if (cfg.dim == 0) throw std::invalid_argument("synth: dim must be > 0");
    if (cfg.samples_per_domain == 0)
        throw std::invalid_argument("synth: samples_per_domain must be > 0");
    if (cfg.noise < 0.0) throw std::invalid_argument("synth: noise must be >= 0");
    if (cfg.domains.empty()) throw std::invalid_argument("synth: need at least one domain");
    if (cfg.with_knowledge && cfg.entities_per_category == 0)
        throw std::invalid_argument("synth: entities_per_category must be > 0");
    for (const SynthDomain& d : cfg.domains) {
        if (d.delta < 0.0) throw std::invalid_argument("synth: delta must be >= 0");
        if (d.pi.size() != cfg.categories)
            throw std::invalid_argument("synth: domain '" + d.name + "' prior has " +
                                        std::to_string(d.pi.size()) + " entries, expected " +
                                        std::to_string(cfg.categories));
        double sum = 0.0;
        for (double p : d.pi) {
            if (p < 0.0) throw std::invalid_argument("synth: negative prior entry");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("synth: prior of domain '" + d.name + "' sums to " +
                                        format_double(sum));
        topic_from_token(d.topic);
        platform_from_token(d.platform);
    }
}
}  // namespace detail

// Per item: draw the label from the domain prior, then dim unit normals.
// Feature j = class_separation * [j == label mod dim] + delta / sqrt(dim) + noise * z_j.
inline SynthResult synth_generate(const SynthConfig& cfg) {
    detail::check_synth_config(cfg);
    Rng rng(cfg.seed);
    SynthResult res;
    double u = 1.0 / std::sqrt(static_cast<double>(cfg.dim));

    if (cfg.with_knowledge) {
        size_t member_of = res.kg.intern_relation("member-of");
        for (size_t c = 0; c < cfg.categories; ++c) {
            size_t anchor = res.kg.intern_entity("cat" + std::to_string(c));
            for (size_t m = 0; m < cfg.entities_per_category; ++m) {
                size_t member =
                    res.kg.intern_entity("e" + std::to_string(c) + "_" + std::to_string(m));
                res.kg.add_triplet(member, member_of, anchor);
            }
        }
    }

    for (size_t d = 0; d < cfg.domains.size(); ++d) {
        const SynthDomain& dom = cfg.domains[d];
        std::string name = dom.name.empty() ? "d" + std::to_string(d) : dom.name;
        for (size_t i = 0; i < cfg.samples_per_domain; ++i) {
            size_t label = rng.categorical(dom.pi);
            std::vector<double> x(cfg.dim);
            for (size_t j = 0; j < cfg.dim; ++j) {
                double mean = (j == label % cfg.dim) ? cfg.class_separation : 0.0;
                x[j] = mean + dom.delta * u + cfg.noise * rng.normal();
            }

            NewsItem item;
            char idx[16];
            std::snprintf(idx, sizeof(idx), "%05zu", i);
            item.id = name + "-" + idx;
            item.text = "synthetic sample " + std::to_string(i) + " from domain " + name +
                        " with generated content";
            item.topic = topic_from_token(dom.topic);
            item.platform = platform_from_token(dom.platform);
            item.binary_label = label == 0 ? BinaryLabel::real : BinaryLabel::fake;
            item.fine_label = static_cast<FineLabel>(label);
            item.metadata["category"] = std::to_string(label);
            item.metadata["domain"] = name;
            if (cfg.with_knowledge) {
                size_t count = 1 + rng.index(2);
                for (size_t e = 0; e < count; ++e) {
                    EntityMention m;
                    m.name = "e" + std::to_string(label) + "_" +
                             std::to_string(rng.index(cfg.entities_per_category));
                    m.confidence = rng.uniform(0.5, 1.0);
                    item.entities.push_back(std::move(m));
                }
            }

            res.features.emplace(item.id, std::move(x));
            res.labels.push_back(label);
            res.domain_of.push_back(d);
            res.items.push_back(std::move(item));
        }
    }
    return res;
}

}  // namespace kean
