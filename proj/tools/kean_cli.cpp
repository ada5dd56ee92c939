#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kean/config.hpp"
#include "kean/data.hpp"
#include "kean/features.hpp"
#include "kean/knowledge.hpp"
#include "kean/label_shift.hpp"
#include "kean/model.hpp"
#include "kean/report.hpp"
#include "kean/synth.hpp"
#include "kean/tasks.hpp"
#include "kean/util.hpp"
#include "json.hpp"

using nlohmann::json;

namespace {

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Every run documents itself: the output directory always carries the fully
// resolved config the run actually used.
std::string prepare_output_dir(const json& cfg) {
    std::string dir = cfg.at("output_dir").get<std::string>();
    if (dir.empty()) throw std::invalid_argument("config: output_dir must not be empty");
    std::filesystem::create_directories(dir);
    write_json(dir + "/resolved_config.json", cfg);
    return dir;
}

std::string require_path(const json& cfg, const std::string& key) {
    std::string v = cfg.at(key).get<std::string>();
    if (v.empty()) throw std::invalid_argument("config: " + key + " is required");
    return v;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// Feature providers assembled from the features config subtree. The knowledge
// store and embedding table are kept alive alongside their provider.
struct ProviderBundle {
    std::unique_ptr<kean::IFeatureProvider> text, visual, knowledge;
    std::shared_ptr<const kean::KnowledgeStore> store;
    std::shared_ptr<const kean::EmbeddingTable> table;
};

ProviderBundle build_providers(const json& f, const std::string& output_dir) {
    ProviderBundle b;

    const json& t = f.at("text");
    std::string tkind = t.at("kind").get<std::string>();
    if (tkind == "hashing")
        b.text = std::make_unique<kean::TextHashProvider>(t.at("dim").get<size_t>(),
                                                          t.at("seed").get<uint64_t>());
    else if (tkind == "file")
        b.text = std::make_unique<kean::PrecomputedProvider>(t.at("path").get<std::string>(),
                                                             t.at("dim").get<size_t>());
    else
        throw std::invalid_argument("config: features.text.kind must be 'hashing' or 'file' (got '" +
                                    tkind + "')");

    const json& v = f.at("visual");
    std::string vkind = v.at("kind").get<std::string>();
    if (vkind == "file")
        b.visual = std::make_unique<kean::PrecomputedProvider>(v.at("path").get<std::string>(),
                                                               v.at("dim").get<size_t>());
    else if (vkind == "image-stats")
        b.visual = std::make_unique<kean::ImageStatsProvider>(v.at("dim").get<size_t>(),
                                                              v.at("image_dir").get<std::string>());
    else if (vkind != "none")
        throw std::invalid_argument(
            "config: features.visual.kind must be 'none', 'file' or 'image-stats' (got '" + vkind +
            "')");

    const json& k = f.at("knowledge");
    std::string kkind = k.at("kind").get<std::string>();
    if (kkind != "none") {
        std::string triplets = k.at("triplets").get<std::string>();
        if (triplets.empty())
            throw std::invalid_argument("config: features.knowledge.triplets is required for kind '" +
                                        kkind + "'");
        kean::KnowledgeStore store = kean::load_triplet_file(triplets);
        std::string attributes = k.at("attributes").get<std::string>();
        if (!attributes.empty()) kean::load_attribute_file(attributes, store);
        b.store = std::make_shared<const kean::KnowledgeStore>(std::move(store));

        if (kkind == "transe") {
            kean::TransEConfig tc;
            tc.dk = k.at("dk").get<size_t>();
            tc.margin = k.at("margin").get<double>();
            tc.epochs = k.at("epochs").get<size_t>();
            tc.learning_rate = k.at("learning_rate").get<double>();
            tc.negatives_per_positive = k.at("negatives_per_positive").get<size_t>();
            tc.batch_size = k.at("batch_size").get<size_t>();
            kean::TransEResult tr = kean::transe_train(*b.store, tc, k.at("seed").get<uint64_t>());
            b.table = std::make_shared<const kean::EmbeddingTable>(std::move(tr.table));
            kean::export_embeddings(*b.table, *b.store, output_dir + "/embeddings.tsv");
        } else if (kkind == "file") {
            kean::NamedEmbeddings ne = kean::load_embeddings(k.at("path").get<std::string>());
            std::vector<std::string> warnings;
            kean::EmbeddingTable tbl = kean::align_embeddings(ne, *b.store, &warnings);
            for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
            b.table = std::make_shared<const kean::EmbeddingTable>(std::move(tbl));
        } else {
            throw std::invalid_argument(
                "config: features.knowledge.kind must be 'none', 'transe' or 'file' (got '" + kkind +
                "')");
        }
        auto warn = [](const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); };
        b.knowledge = std::make_unique<kean::KnowledgeFeatureProvider>(b.store, b.table, warn);
    }
    return b;
}

// Provider widths must match what the model was (or will be) built with;
// checked up front so the error names the config keys instead of a batch shape.
void check_dims(const ProviderBundle& b, const kean::KeanConfig& model) {
    if (b.text->dimension() != model.text_dim)
        throw std::invalid_argument("config: features.text.dim is " +
                                    std::to_string(b.text->dimension()) + " but model.text_dim is " +
                                    std::to_string(model.text_dim));
    if (b.visual && b.visual->dimension() != model.visual_dim)
        throw std::invalid_argument("config: features.visual.dim is " +
                                    std::to_string(b.visual->dimension()) +
                                    " but model.visual_dim is " + std::to_string(model.visual_dim));
    if (b.knowledge && b.knowledge->dimension() != model.knowledge_dim)
        throw std::invalid_argument("config: knowledge features have dim " +
                                    std::to_string(b.knowledge->dimension()) +
                                    " but model.knowledge_dim is " +
                                    std::to_string(model.knowledge_dim));
}

int cmd_ingest(const json& cfg) {
    std::string dir = prepare_output_dir(cfg);
    std::vector<kean::NewsItem> items = kean::ingest(require_path(cfg, "input"));
    size_t input_rows = items.size();

    std::vector<kean::DropRecord> drops;
    if (cfg.at("quality").at("enabled").get<bool>()) {
        kean::FilterResult fr =
            kean::quality_filter(items, cfg.at("quality").at("min_tokens").get<size_t>());
        items = std::move(fr.kept);
        drops.insert(drops.end(), fr.dropped.begin(), fr.dropped.end());
    }
    if (cfg.at("dedupe").at("enabled").get<bool>()) {
        kean::FilterResult fr = kean::dedupe(items, cfg.at("dedupe").at("threshold").get<double>());
        items = std::move(fr.kept);
        drops.insert(drops.end(), fr.dropped.begin(), fr.dropped.end());
    }

    size_t ent_accepted = 0, ent_review = 0, ent_rejected = 0;
    std::string review_lines;
    if (cfg.at("entities").at("enabled").get<bool>()) {
        double w1 = cfg.at("entities").at("review_threshold").get<double>();
        double w2 = cfg.at("entities").at("accept_threshold").get<double>();
        for (kean::NewsItem& item : items) {
            kean::EntityFilterResult er = kean::entity_filter(item.entities, w1, w2);
            ent_accepted += er.accepted.size();
            ent_review += er.review.size();
            ent_rejected += er.rejected.size();
            for (const kean::EntityMention& m : er.review)
                review_lines += item.id + "\t" + m.name + "\t" + kean::format_double(m.confidence) +
                                "\n";
            item.entities = std::move(er.accepted);
        }
        write_text(dir + "/entity_review.tsv", review_lines);
    }

    kean::export_items(items, dir + "/dataset.jsonl");

    json report;
    report["input_rows"] = input_rows;
    report["kept_rows"] = items.size();
    json jd = json::array();
    size_t short_text = 0, exact_dup = 0, near_dup = 0;
    for (const kean::DropRecord& d : drops) {
        jd.push_back({{"id", d.id}, {"reason", d.reason}, {"kept_id", d.kept_id}});
        if (d.reason == "short-text") ++short_text;
        if (d.reason == "exact-duplicate") ++exact_dup;
        if (d.reason == "near-duplicate") ++near_dup;
    }
    report["drops"] = {{"short_text", short_text},
                       {"exact_duplicate", exact_dup},
                       {"near_duplicate", near_dup}};
    report["dropped"] = jd;
    report["entities"] = {{"accepted", ent_accepted},
                          {"review", ent_review},
                          {"rejected", ent_rejected}};
    write_json(dir + "/ingest_report.json", report);

    std::printf("ingest: %zu rows in, %zu kept, %zu dropped\n", input_rows, items.size(),
                drops.size());
    return 0;
}

int cmd_synth(const json& cfg) {
    std::string dir = prepare_output_dir(cfg);
    kean::SynthConfig sc = kean::synth_config_from_json(cfg);
    kean::SynthResult r = kean::synth_generate(sc);

    kean::export_items(r.items, dir + "/dataset.jsonl");
    kean::save_precomputed(r.features, sc.dim, dir + "/features.tsv");
    if (sc.with_knowledge) {
        kean::export_triplets(r.kg, dir + "/triplets.tsv");
        kean::export_attributes(r.kg, dir + "/attributes.tsv");
    }

    json report;
    report["rows"] = r.items.size();
    report["dim"] = sc.dim;
    json domains = json::array();
    for (size_t d = 0; d < sc.domains.size(); ++d) {
        std::vector<size_t> label_counts(sc.categories, 0);
        size_t rows = 0;
        for (size_t i = 0; i < r.items.size(); ++i)
            if (r.domain_of[i] == d) {
                ++rows;
                ++label_counts[r.labels[i]];
            }
        domains.push_back(
            {{"name", sc.domains[d].name}, {"rows", rows}, {"label_counts", label_counts}});
    }
    report["domains"] = domains;
    write_json(dir + "/synth_report.json", report);

    std::printf("synth: %zu rows across %zu domains\n", r.items.size(), sc.domains.size());
    return 0;
}

kean::TaskInputs assemble_inputs(const json& cfg, const std::vector<kean::NewsItem>& items,
                                 const ProviderBundle& b, const kean::KeanConfig& model) {
    kean::TaskInputs in;
    in.items = items;
    in.text = b.text.get();
    in.visual = b.visual.get();
    in.knowledge = b.knowledge.get();
    in.split_seed = cfg.at("split").at("seed").get<uint64_t>();
    in.stratify_by = cfg.at("split").at("stratify_by").get<std::string>();
    in.model = model;
    in.train = kean::train_config_from_json(cfg.at("train"));
    return in;
}

int run_training_command(const json& cfg, bool adaptation_command) {
    std::string dir = prepare_output_dir(cfg);
    kean::TaskSpec spec = kean::task_spec_from_json(cfg.at("task"));
    if (adaptation_command && !kean::is_adaptation(spec.kind))
        throw std::invalid_argument("adapt: task kind '" + kean::token_of(spec.kind) +
                                    "' is a classification task; use the train command");

    std::vector<kean::NewsItem> items = kean::ingest(require_path(cfg, "dataset"));
    ProviderBundle b = build_providers(cfg.at("features"), dir);
    kean::KeanConfig model = kean::model_config_from_json(cfg.at("model"));
    check_dims(b, model);

    kean::TaskInputs in = assemble_inputs(cfg, items, b, model);
    if (adaptation_command) {
        in.bbse_ridge = cfg.at("bbse").at("ridge").get<double>();
        in.reweight = cfg.at("bbse").at("reweight").get<bool>();
    } else {
        in.reweight = false;
    }

    kean::TaskResult res = kean::run_task(spec, in);
    kean::save_checkpoint(res.model, dir + "/checkpoint");
    write_json(dir + "/metrics.json", kean::task_result_to_json(res));
    write_text(dir + "/metrics.txt", kean::task_result_table(res));
    if (res.has_adaptation && res.adaptation.reweighted)
        kean::save_weights(res.adaptation.weights, kean::category_names(res.headline.categories),
                           dir + "/weights.tsv");

    if (adaptation_command)
        std::printf("adapt: %s pre weighted f1 %s, post weighted f1 %s\n",
                    kean::token_of(spec.kind).c_str(),
                    fixed4(res.adaptation.pre.weighted_f1).c_str(),
                    fixed4(res.adaptation.post.weighted_f1).c_str());
    else if (res.has_adaptation)
        std::printf("train: %s target weighted f1 %s\n", kean::token_of(spec.kind).c_str(),
                    fixed4(res.headline.weighted_f1).c_str());
    else
        std::printf("train: %s accuracy %s, weighted f1 %s\n", kean::token_of(spec.kind).c_str(),
                    fixed4(res.headline.accuracy).c_str(),
                    fixed4(res.headline.weighted_f1).c_str());
    return 0;
}

// Shared by shift and eval: load the checkpoint, partition the dataset by the
// task spec, and check the checkpoint's category count fits the task.
struct LoadedTask {
    kean::KeanParams params;
    kean::TaskSpec spec;
    kean::TaskPartition part;
};

LoadedTask load_task(const json& cfg, const char* command) {
    LoadedTask lt;
    lt.params = kean::load_checkpoint(require_path(cfg, "checkpoint"));
    lt.spec = kean::task_spec_from_json(cfg.at("task"));
    size_t need_k = lt.spec.kind == kean::TaskKind::fine6 ? kean::fine_label_tokens().size() : 2;
    if (lt.params.config.categories != need_k)
        throw std::invalid_argument(std::string(command) + ": checkpoint has " +
                                    std::to_string(lt.params.config.categories) +
                                    " categories but task '" + kean::token_of(lt.spec.kind) +
                                    "' needs " + std::to_string(need_k));
    std::vector<kean::NewsItem> items = kean::ingest(require_path(cfg, "dataset"));
    lt.part = kean::partition_task(lt.spec, items, cfg.at("split").at("seed").get<uint64_t>(),
                                   cfg.at("split").at("stratify_by").get<std::string>());
    return lt;
}

json matrix_to_json(const kean::DenseMatrix& m) {
    json rows = json::array();
    for (size_t i = 0; i < m.rows; ++i) {
        json row = json::array();
        for (size_t c = 0; c < m.cols; ++c) row.push_back(m(i, c));
        rows.push_back(row);
    }
    return rows;
}

int cmd_shift(const json& cfg) {
    std::string dir = prepare_output_dir(cfg);
    LoadedTask lt = load_task(cfg, "shift");
    if (!kean::is_adaptation(lt.spec.kind))
        throw std::invalid_argument("shift: task kind '" + kean::token_of(lt.spec.kind) +
                                    "' has no target rows; need an adaptation kind");
    ProviderBundle b = build_providers(cfg.at("features"), dir);
    check_dims(b, lt.params.config);

    size_t k = lt.params.config.categories;
    kean::TrainData val = kean::build_task_data(lt.part.val, lt.spec.kind, b.text.get(),
                                                b.visual.get(), b.knowledge.get(), lt.params.config,
                                                true);
    kean::TrainData target = kean::build_task_data(lt.part.eval, lt.spec.kind, b.text.get(),
                                                   b.visual.get(), b.knowledge.get(),
                                                   lt.params.config, false);

    std::vector<size_t> val_preds = kean::argmax_rows(kean::kean_predict_probs(val.batch, lt.params));
    std::vector<size_t> val_truth;
    for (int l : val.labels) val_truth.push_back(static_cast<size_t>(l));
    std::vector<size_t> tgt_preds =
        kean::argmax_rows(kean::kean_predict_probs(target.batch, lt.params));

    kean::ConfusionJoint conf = kean::confusion(val_preds, val_truth, k);
    std::vector<double> q = kean::predict_q(tgt_preds, k);
    kean::ImportanceWeights iw = kean::estimate_weights(conf, q, cfg.at("bbse").at("ridge").get<double>());

    std::vector<std::string> names = kean::category_names(k);
    kean::save_weights(iw, names, dir + "/weights.tsv");
    json report;
    report["task"] = kean::token_of(lt.spec.kind);
    report["categories"] = k;
    report["val_rows"] = val.ids.size();
    report["target_rows"] = target.ids.size();
    report["val_confusion"] = matrix_to_json(conf.joint);
    report["target_pred_prior"] = q;
    report["weights"] = iw.w;
    report["raw_weights"] = iw.raw;
    write_json(dir + "/shift_report.json", report);

    std::string line = "shift:";
    for (size_t c = 0; c < k; ++c)
        line += " " + names[c] + "=" + kean::ensure_decimal(kean::format_double(iw.w[c]));
    std::printf("%s\n", line.c_str());
    return 0;
}

int cmd_eval(const json& cfg) {
    std::string dir = prepare_output_dir(cfg);
    LoadedTask lt = load_task(cfg, "eval");
    ProviderBundle b = build_providers(cfg.at("features"), dir);
    check_dims(b, lt.params.config);

    size_t k = lt.params.config.categories;
    kean::TrainData data = kean::build_task_data(lt.part.eval, lt.spec.kind, b.text.get(),
                                                 b.visual.get(), b.knowledge.get(), lt.params.config,
                                                 true);
    std::vector<size_t> preds = kean::argmax_rows(kean::kean_predict_probs(data.batch, lt.params));
    std::vector<size_t> truth;
    for (int l : data.labels) truth.push_back(static_cast<size_t>(l));
    kean::MetricsReport m = kean::compute_metrics(preds, truth, k);

    std::vector<std::string> names = kean::category_names(k);
    json out;
    out["task"] = kean::token_of(lt.spec.kind);
    out["headline"] = kean::metrics_to_json(m, names);
    write_json(dir + "/metrics.json", out);
    write_text(dir + "/metrics.txt",
               "task: " + kean::token_of(lt.spec.kind) + "\n\n" + kean::metrics_table(m, names));

    std::printf("eval: %s accuracy %s, weighted f1 %s\n", kean::token_of(lt.spec.kind).c_str(),
                fixed4(m.accuracy).c_str(), fixed4(m.weighted_f1).c_str());
    return 0;
}

int cmd_kappa(const json& cfg) {
    std::string dir = prepare_output_dir(cfg);
    kean::AnnotationMatrix a = kean::load_annotations(require_path(cfg, "annotations"));
    double kappa = kean::fleiss_kappa(a);
    json out;
    out["kappa"] = kappa;
    out["items"] = a.counts.rows;
    out["raters"] = a.raters;
    out["categories"] = a.categories;
    write_json(dir + "/kappa.json", out);
    std::printf("%s\n", kean::ensure_decimal(kean::format_double(kappa)).c_str());
    return 0;
}

int cmd_report(const json& cfg) {
    std::string dir = prepare_output_dir(cfg);
    std::string input = require_path(cfg, "input");
    std::ifstream in(input, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open report input: " + input);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("report input is not valid JSON: " + input);

    std::string text;
    if (j.contains("headline")) {
        std::vector<std::string> names;
        kean::MetricsReport headline = kean::metrics_from_json(j.at("headline"), &names);
        text += "task: " + j.value("task", std::string("unknown")) + "\n\n";
        if (j.contains("adaptation")) {
            const json& a = j.at("adaptation");
            text += "target metrics before reweighting\n";
            text += kean::metrics_table(kean::metrics_from_json(a.at("pre")), names);
            if (a.value("reweighted", false)) {
                text += "\ntarget metrics after reweighted retraining\n";
                text += kean::metrics_table(kean::metrics_from_json(a.at("post")), names);
                text += "\nimportance weights\n";
                std::vector<double> w = a.at("weights").get<std::vector<double>>();
                for (size_t c = 0; c < w.size(); ++c)
                    text += names[c] + "  " + kean::ensure_decimal(kean::format_double(w[c])) + "\n";
            }
        } else {
            text += kean::metrics_table(headline, names);
        }
    } else if (j.contains("accuracy")) {
        std::vector<std::string> names;
        kean::MetricsReport m = kean::metrics_from_json(j, &names);
        text = kean::metrics_table(m, names);
    } else {
        throw std::runtime_error("report input has neither a 'headline' nor metric fields: " + input);
    }
    write_text(dir + "/report.txt", text);
    std::fputs(text.c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-domain fake news detection toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    const std::pair<const char*, const char*> commands[] = {
        {"ingest", "clean and export a raw dataset"},
        {"synth", "generate a synthetic benchmark"},
        {"train", "train a classifier on one task"},
        {"adapt", "run a domain adaptation task with shift correction"},
        {"shift", "estimate label-shift importance weights from a checkpoint"},
        {"eval", "evaluate a checkpoint on a task's evaluation rows"},
        {"kappa", "compute Fleiss kappa for an annotation file"},
        {"report", "render a machine-readable metrics file as text"}};
    for (const auto& [name, desc] : commands) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config,-c", config_path, "JSON config file");
        sub->add_option("--set,-s", overrides, "override as key.path=value (repeatable)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::string msg = e.what();
        size_t nl = msg.find('\n');
        if (nl != std::string::npos) msg = msg.substr(0, nl);
        std::fprintf(stderr, "error: %s\n", msg.c_str());
        return 1;
    }

    std::string cmd = app.get_subcommands().front()->get_name();
    try {
        json cfg = kean::default_config(cmd);
        if (!config_path.empty()) kean::merge_config(cfg, kean::load_config_file(config_path));
        for (const std::string& s : overrides) kean::apply_override(cfg, s);

        if (cmd == "ingest") return cmd_ingest(cfg);
        if (cmd == "synth") return cmd_synth(cfg);
        if (cmd == "train") return run_training_command(cfg, false);
        if (cmd == "adapt") return run_training_command(cfg, true);
        if (cmd == "shift") return cmd_shift(cfg);
        if (cmd == "eval") return cmd_eval(cfg);
        if (cmd == "kappa") return cmd_kappa(cfg);
        if (cmd == "report") return cmd_report(cfg);
        throw std::invalid_argument("unknown command: " + cmd);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
