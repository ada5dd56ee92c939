#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kean/model.hpp"
#include "kean/synth.hpp"
#include "kean/tasks.hpp"
#include "json.hpp"

namespace kean {

namespace detail {

inline nlohmann::json features_defaults() {
    return nlohmann::json{
        {"text", {{"kind", "hashing"}, {"dim", 32}, {"seed", 1}, {"path", ""}}},
        {"visual", {{"kind", "none"}, {"dim", 8}, {"path", ""}, {"image_dir", ""}}},
        {"knowledge",
         {{"kind", "none"},
          {"triplets", ""},
          {"attributes", ""},
          {"path", ""},
          {"dk", 16},
          {"margin", 1.0},
          {"epochs", 100},
          {"learning_rate", 0.01},
          {"negatives_per_positive", 1},
          {"batch_size", 0},
          {"seed", 7}}}};
}

inline nlohmann::json model_defaults() {
    return nlohmann::json{{"text_dim", 32},          {"visual_dim", 8},
                          {"knowledge_dim", 16},     {"text_proj", 16},
                          {"visual_proj", 8},        {"knowledge_proj", 8},
                          {"classifier_hidden", 32}, {"discriminator_hidden", 16},
                          {"categories", 2}};
}

inline nlohmann::json train_defaults() {
    return nlohmann::json{{"seed", 0},
                          {"epochs", 20},
                          {"batch_size", 32},
                          {"learning_rate", 1e-3},
                          {"weight_decay", 5e-4},
                          {"lr_decay", 0.95},
                          {"alpha", 0.8},
                          {"beta", 0.4},
                          {"grl_lambda", 1.0},
                          {"patience", 5},
                          {"class_weights", nlohmann::json::array()}};
}

inline nlohmann::json task_defaults(const char* kind) {
    return nlohmann::json{
        {"kind", kind},
        {"source_topics", {"politics", "entertainment", "business", "health"}},
        {"target_topics", {"society", "conflict"}},
        {"source_platform", "official"},
        {"target_platform", "social"}};
}

inline nlohmann::json split_defaults() {
    return nlohmann::json{{"seed", 0}, {"stratify_by", ""}};
}

}  // namespace detail

// Full default tree per subcommand. Config files and key.path=value overrides
// may only touch keys that exist here; anything else is rejected by name.
inline nlohmann::json default_config(const std::string& command) {
    using nlohmann::json;
    if (command == "ingest")
        return json{{"input", ""},
                    {"output_dir", "out/ingest"},
                    {"quality", {{"enabled", true}, {"min_tokens", 5}}},
                    {"dedupe", {{"enabled", true}, {"threshold", 0.9}}},
                    {"entities",
                     {{"enabled", true}, {"review_threshold", 0.1}, {"accept_threshold", 0.3}}}};
    if (command == "synth") {
        json src{{"name", "src"}, {"delta", 0.0},          {"pi", {0.5, 0.5}},
                 {"topic", "politics"}, {"platform", "official"}};
        json tgt = src;
        tgt["name"] = "tgt";
        tgt["platform"] = "social";
        return json{{"output_dir", "out/synth"},
                    {"categories", 2},
                    {"dim", 16},
                    {"samples_per_domain", 200},
                    {"noise", 1.0},
                    {"class_separation", 2.0},
                    {"with_knowledge", false},
                    {"entities_per_category", 5},
                    {"seed", 0},
                    {"domains", json::array({src, tgt})}};
    }
    if (command == "train")
        return json{{"dataset", ""},
                    {"output_dir", "out/train"},
                    {"features", detail::features_defaults()},
                    {"model", detail::model_defaults()},
                    {"train", detail::train_defaults()},
                    {"task", detail::task_defaults("binary")},
                    {"split", detail::split_defaults()}};
    if (command == "adapt")
        return json{{"dataset", ""},
                    {"output_dir", "out/adapt"},
                    {"features", detail::features_defaults()},
                    {"model", detail::model_defaults()},
                    {"train", detail::train_defaults()},
                    {"task", detail::task_defaults("adapt-topic")},
                    {"split", detail::split_defaults()},
                    {"bbse", {{"ridge", 1e-6}, {"reweight", true}}}};
    if (command == "shift")
        return json{{"checkpoint", ""},
                    {"dataset", ""},
                    {"output_dir", "out/shift"},
                    {"features", detail::features_defaults()},
                    {"task", detail::task_defaults("adapt-topic")},
                    {"split", detail::split_defaults()},
                    {"bbse", {{"ridge", 1e-6}}}};
    if (command == "eval")
        return json{{"checkpoint", ""},
                    {"dataset", ""},
                    {"output_dir", "out/eval"},
                    {"features", detail::features_defaults()},
                    {"task", detail::task_defaults("binary")},
                    {"split", detail::split_defaults()}};
    if (command == "kappa") return json{{"annotations", ""}, {"output_dir", "out/kappa"}};
    if (command == "report") return json{{"input", ""}, {"output_dir", "out/report"}};
    throw std::invalid_argument("unknown command: " + command);
}

// Recursive overlay. Leaf values (scalars and arrays) replace; objects merge;
// keys absent from the defaults are errors carrying their dotted path.
inline void merge_config(nlohmann::json& base, const nlohmann::json& overlay,
                         const std::string& path = "") {
    if (!overlay.is_object())
        throw std::invalid_argument("config: expected an object" +
                                    (path.empty() ? std::string() : " at '" + path + "'"));
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        std::string where = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key()))
            throw std::invalid_argument("config: unknown key '" + where + "'");
        nlohmann::json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_config(slot, it.value(), where);
        } else {
            if (it.value().is_object())
                throw std::invalid_argument("config: key '" + where + "' does not take an object");
            slot = it.value();
        }
    }
}

inline nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("config file is not valid JSON: " + path);
    return j;
}

// key.path=value. The value is parsed as JSON when possible (numbers, bools,
// arrays), otherwise taken as a plain string.
inline void apply_override(nlohmann::json& cfg, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override '" + assignment + "' is not of the form key.path=value");
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);

    std::vector<std::string> segs;
    size_t start = 0;
    while (true) {
        size_t dot = key.find('.', start);
        segs.push_back(key.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    nlohmann::json* node = &cfg;
    std::string prefix;
    for (size_t i = 0; i + 1 < segs.size(); ++i) {
        prefix = prefix.empty() ? segs[i] : prefix + "." + segs[i];
        if (!node->contains(segs[i]))
            throw std::invalid_argument("config: unknown key '" + prefix + "'");
        node = &(*node)[segs[i]];
        if (!node->is_object())
            throw std::invalid_argument("config: key '" + prefix + "' has no sub-keys");
    }
    const std::string& last = segs.back();
    if (!node->contains(last)) throw std::invalid_argument("config: unknown key '" + key + "'");
    nlohmann::json& slot = (*node)[last];
    if (slot.is_object())
        throw std::invalid_argument("config: key '" + key + "' does not take a scalar override");
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    slot = parsed.is_discarded() ? nlohmann::json(value) : parsed;
}

// Domain entry for synth configs; a missing pi means uniform priors.
inline SynthDomain domain_from_json(const nlohmann::json& j, size_t index, size_t categories) {
    std::string where = "domains[" + std::to_string(index) + "]";
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    static const std::set<std::string> known = {"name", "delta", "pi", "topic", "platform"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + where + "." + it.key() + "'");
    SynthDomain d;
    d.name = j.value("name", "d" + std::to_string(index));
    d.delta = j.value("delta", 0.0);
    d.topic = j.value("topic", "politics");
    d.platform = j.value("platform", "official");
    if (j.contains("pi"))
        d.pi = j.at("pi").get<std::vector<double>>();
    else
        d.pi.assign(categories, 1.0 / static_cast<double>(categories));
    return d;
}

inline SynthConfig synth_config_from_json(const nlohmann::json& cfg) {
    SynthConfig sc;
    sc.categories = cfg.at("categories").get<size_t>();
    sc.dim = cfg.at("dim").get<size_t>();
    sc.samples_per_domain = cfg.at("samples_per_domain").get<size_t>();
    sc.noise = cfg.at("noise").get<double>();
    sc.class_separation = cfg.at("class_separation").get<double>();
    sc.with_knowledge = cfg.at("with_knowledge").get<bool>();
    sc.entities_per_category = cfg.at("entities_per_category").get<size_t>();
    sc.seed = cfg.at("seed").get<uint64_t>();
    const nlohmann::json& doms = cfg.at("domains");
    if (!doms.is_array() || doms.empty())
        throw std::invalid_argument("config: domains must be a non-empty array");
    for (size_t i = 0; i < doms.size(); ++i)
        sc.domains.push_back(domain_from_json(doms[i], i, sc.categories));
    return sc;
}

inline KeanConfig model_config_from_json(const nlohmann::json& m) {
    KeanConfig c;
    c.text_dim = m.at("text_dim").get<size_t>();
    c.visual_dim = m.at("visual_dim").get<size_t>();
    c.knowledge_dim = m.at("knowledge_dim").get<size_t>();
    c.text_proj = m.at("text_proj").get<size_t>();
    c.visual_proj = m.at("visual_proj").get<size_t>();
    c.knowledge_proj = m.at("knowledge_proj").get<size_t>();
    c.classifier_hidden = m.at("classifier_hidden").get<size_t>();
    c.discriminator_hidden = m.at("discriminator_hidden").get<size_t>();
    c.categories = m.at("categories").get<size_t>();
    return c;
}

inline TrainConfig train_config_from_json(const nlohmann::json& t) {
    TrainConfig c;
    c.seed = t.at("seed").get<uint64_t>();
    c.epochs = t.at("epochs").get<size_t>();
    c.batch_size = t.at("batch_size").get<size_t>();
    c.learning_rate = t.at("learning_rate").get<double>();
    c.weight_decay = t.at("weight_decay").get<double>();
    c.lr_decay = t.at("lr_decay").get<double>();
    c.alpha = t.at("alpha").get<double>();
    c.beta = t.at("beta").get<double>();
    c.grl_lambda = t.at("grl_lambda").get<double>();
    c.patience = t.at("patience").get<size_t>();
    c.class_weights = t.at("class_weights").get<std::vector<double>>();
    return c;
}

inline TaskSpec task_spec_from_json(const nlohmann::json& t) {
    TaskSpec spec;
    spec.kind = task_kind_from_token(t.at("kind").get<std::string>());
    spec.source_topics = t.at("source_topics").get<std::vector<std::string>>();
    spec.target_topics = t.at("target_topics").get<std::vector<std::string>>();
    spec.source_platform = t.at("source_platform").get<std::string>();
    spec.target_platform = t.at("target_platform").get<std::string>();
    return spec;
}

}  // namespace kean
