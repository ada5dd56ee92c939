#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kean/synth.hpp"
#include "kean/tasks.hpp"

using namespace kean;

namespace {

// Serves vectors straight from a synth result's feature map.
class MapProvider : public IFeatureProvider {
public:
    MapProvider(size_t dim, const std::unordered_map<std::string, std::vector<double>>& map)
        : dim_(dim), map_(&map) {}
    size_t dimension() const override { return dim_; }
    std::string kind() const override { return "test-map"; }
    FeatureVector features(const NewsItem& item) const override {
        FeatureVector f;
        auto it = map_->find(item.id);
        if (it == map_->end()) {
            f.present = false;
            f.values.assign(dim_, 0.0);
            return f;
        }
        f.values = it->second;
        return f;
    }

private:
    size_t dim_;
    const std::unordered_map<std::string, std::vector<double>>* map_;
};

KeanConfig tiny_model(size_t text_dim, size_t categories) {
    KeanConfig c;
    c.text_dim = text_dim;
    c.visual_dim = 2;
    c.knowledge_dim = 2;
    c.text_proj = 8;
    c.visual_proj = 2;
    c.knowledge_proj = 2;
    c.classifier_hidden = 12;
    c.discriminator_hidden = 8;
    c.categories = categories;
    return c;
}

TrainConfig quick_train(size_t epochs, uint64_t seed, double lr = 1e-3) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 16;
    t.seed = seed;
    t.learning_rate = lr;
    return t;
}

SynthDomain domain(const std::string& name, const std::string& topic, const std::string& platform,
                   size_t categories) {
    SynthDomain d;
    d.name = name;
    d.topic = topic;
    d.platform = platform;
    d.pi.assign(categories, 1.0 / double(categories));
    return d;
}

std::set<std::string> id_set(const std::vector<std::string>& v) {
    return std::set<std::string>(v.begin(), v.end());
}

}  // namespace

TEST_CASE("task kinds round-trip their tokens") {
    for (const std::string& tok : task_kind_tokens())
        CHECK(token_of(task_kind_from_token(tok)) == tok);
    CHECK_THROWS_WITH(task_kind_from_token("regression"),
                      Catch::Matchers::ContainsSubstring("regression"));
}

TEST_CASE("task specs are validated per kind") {
    TaskSpec ok;
    ok.kind = TaskKind::adapt_topic;
    CHECK_NOTHROW(validate_task_spec(ok));

    TaskSpec three = ok;
    three.source_topics = {"politics", "entertainment", "business"};
    CHECK_THROWS_WITH(validate_task_spec(three),
                      Catch::Matchers::ContainsSubstring("exactly 4 source and 2 target"));

    TaskSpec overlap = ok;
    overlap.target_topics = {"politics", "conflict"};  // politics repeats a source topic
    overlap.source_topics = {"politics", "entertainment", "business", "health"};
    CHECK_THROWS_WITH(validate_task_spec(overlap),
                      Catch::Matchers::ContainsSubstring("cover all 6"));

    TaskSpec badtok = ok;
    badtok.source_topics = {"politics", "entertainment", "business", "astrology"};
    CHECK_THROWS_WITH(validate_task_spec(badtok),
                      Catch::Matchers::ContainsSubstring("astrology"));

    TaskSpec same;
    same.kind = TaskKind::adapt_platform;
    same.source_platform = "social";
    same.target_platform = "social";
    CHECK_THROWS_WITH(validate_task_spec(same),
                      Catch::Matchers::ContainsSubstring("must differ"));

    TaskSpec dual;
    dual.kind = TaskKind::adapt_dual;
    dual.source_platform = "official";
    dual.target_platform = "fact-check";
    CHECK_NOTHROW(validate_task_spec(dual));

    TaskSpec plain;  // classification kinds ignore the selectors
    plain.kind = TaskKind::binary;
    plain.source_topics.clear();
    CHECK_NOTHROW(validate_task_spec(plain));
}

TEST_CASE("task prerequisites are enforced") {
    SynthConfig sc;
    sc.dim = 6;
    sc.samples_per_domain = 20;
    sc.domains = {domain("d", "politics", "official", 2)};
    SynthResult r = synth_generate(sc);
    MapProvider text(6, r.features);

    TaskInputs in;
    in.items = r.items;
    in.text = &text;
    in.model = tiny_model(6, 2);
    in.train = quick_train(1, 0);

    TaskSpec fine;
    fine.kind = TaskKind::fine6;
    CHECK_THROWS_WITH(run_task(fine, in), Catch::Matchers::ContainsSubstring("6 categories"));

    TaskSpec plain;
    plain.kind = TaskKind::binary;
    TaskInputs six = in;
    six.model = tiny_model(6, 6);
    CHECK_THROWS_WITH(run_task(plain, six), Catch::Matchers::ContainsSubstring("2 categories"));

    TaskSpec kg;
    kg.kind = TaskKind::binary_knowledge;
    CHECK_THROWS_WITH(run_task(kg, in),
                      Catch::Matchers::ContainsSubstring("knowledge feature provider"));

    TaskInputs empty = in;
    empty.items.clear();
    CHECK_THROWS_WITH(run_task(plain, empty), Catch::Matchers::ContainsSubstring("dataset is empty"));

    TaskInputs notext = in;
    notext.text = nullptr;
    CHECK_THROWS_WITH(run_task(plain, notext),
                      Catch::Matchers::ContainsSubstring("text feature provider"));
}

TEST_CASE("six-way classification masters a separable corpus") {
    SynthConfig sc;
    sc.categories = 6;
    sc.dim = 12;
    sc.samples_per_domain = 100;
    sc.class_separation = 4.0;
    sc.noise = 0.2;
    sc.seed = 42;
    sc.domains = {domain("d", "politics", "official", 6)};
    SynthResult r = synth_generate(sc);
    MapProvider text(12, r.features);

    TaskInputs in;
    in.items = r.items;
    in.text = &text;
    in.split_seed = 7;
    in.stratify_by = "fine_label";
    in.model = tiny_model(12, 6);
    in.model.text_proj = 12;
    in.model.classifier_hidden = 24;
    in.train = quick_train(60, 3, 1e-2);
    in.train.patience = 60;

    TaskSpec spec;
    spec.kind = TaskKind::fine6;
    TaskResult res = run_task(spec, in);

    CHECK(res.kind == TaskKind::fine6);
    CHECK_FALSE(res.has_adaptation);
    CHECK(res.headline.accuracy > 0.95);
    CHECK(res.headline.total == res.audit.eval_ids.size());
    // Stratified cuts round per stratum, so sizes land near 60/20/20.
    CHECK(res.audit.train_ids.size() >= 58);
    CHECK(res.audit.val_ids.size() >= 15);
    CHECK(res.audit.eval_ids.size() >= 15);
    CHECK(res.audit.adversarial_ids.empty());

    // The three splits never share a row.
    std::set<std::string> train = id_set(res.audit.train_ids);
    std::set<std::string> val = id_set(res.audit.val_ids);
    std::set<std::string> test = id_set(res.audit.eval_ids);
    CHECK(train.size() + val.size() + test.size() == 100);
    for (const std::string& id : test) {
        CHECK_FALSE(train.count(id));
        CHECK_FALSE(val.count(id));
    }
    CHECK(res.train_report.trained_ids == res.audit.train_ids);
}

TEST_CASE("knowledge features lift a weak text signal") {
    SynthConfig sc;
    sc.categories = 2;
    sc.dim = 8;
    sc.samples_per_domain = 120;
    sc.class_separation = 0.0;  // text carries no label signal at all
    sc.noise = 1.0;
    sc.with_knowledge = true;
    sc.entities_per_category = 4;
    sc.domains = {domain("d", "politics", "official", 2)};

    size_t kg_wins = 0, trials = 3;
    for (uint64_t seed = 0; seed < trials; ++seed) {
        sc.seed = 100 + seed;
        SynthResult r = synth_generate(sc);
        MapProvider text(8, r.features);

        TransEConfig tc;
        tc.dk = 6;
        tc.epochs = 200;
        tc.learning_rate = 0.05;
        TransEResult emb = transe_train(r.kg, tc, seed);
        auto store = std::make_shared<KnowledgeStore>(r.kg);
        auto table = std::make_shared<EmbeddingTable>(emb.table);
        KnowledgeFeatureProvider kg(store, table);

        TaskInputs in;
        in.items = r.items;
        in.text = &text;
        in.knowledge = &kg;
        in.split_seed = seed;
        in.stratify_by = "binary_label";
        in.model = tiny_model(8, 2);
        in.model.knowledge_dim = 6;
        in.model.knowledge_proj = 6;
        in.train = quick_train(20, seed, 5e-3);

        TaskSpec plain;
        plain.kind = TaskKind::binary;
        TaskSpec with_kg;
        with_kg.kind = TaskKind::binary_knowledge;
        double acc_plain = run_task(plain, in).headline.accuracy;
        double acc_kg = run_task(with_kg, in).headline.accuracy;
        INFO("seed " << seed << ": plain " << acc_plain << " vs knowledge " << acc_kg);
        if (acc_kg >= acc_plain) ++kg_wins;
    }
    CHECK(kg_wins == trials);
}

TEST_CASE("topic adaptation audits its row provenance") {
    SynthConfig sc;
    sc.dim = 10;
    sc.samples_per_domain = 30;
    sc.seed = 11;
    for (const std::string& t : topic_tokens()) sc.domains.push_back(domain(t, t, "official", 2));
    SynthResult r = synth_generate(sc);
    MapProvider text(10, r.features);

    TaskInputs in;
    in.items = r.items;
    in.text = &text;
    in.split_seed = 3;
    in.stratify_by = "binary_label";
    in.model = tiny_model(10, 2);
    in.train = quick_train(4, 9);

    TaskSpec spec;
    spec.kind = TaskKind::adapt_topic;  // default: society + conflict held out
    TaskResult res = run_task(spec, in);

    REQUIRE(res.has_adaptation);
    CHECK(res.adaptation.reweighted);
    CHECK(res.headline.accuracy == res.adaptation.post.accuracy);
    CHECK(res.adaptation.pre.total == 60);
    CHECK(res.adaptation.post.total == 60);
    CHECK(res.adaptation.weights.w.size() == 2);
    CHECK(res.adaptation.val_confusion.joint.rows == 2);
    REQUIRE(res.adaptation.target_pred_prior.size() == 2);
    CHECK(res.adaptation.target_pred_prior[0] + res.adaptation.target_pred_prior[1] ==
          Catch::Approx(1.0).margin(1e-12));

    // 4 source topics of 30 rows split 9:1 per stratum; both targets evaluated.
    CHECK(res.audit.train_ids.size() + res.audit.val_ids.size() == 120);
    CHECK(res.audit.val_ids.size() >= 11);
    CHECK(res.audit.val_ids.size() <= 12);
    CHECK(res.audit.eval_ids.size() == 60);
    CHECK(res.audit.adversarial_ids == res.audit.eval_ids);
    CHECK(res.train_report.trained_ids == res.audit.train_ids);
    CHECK(res.retrain_report.trained_ids == res.audit.train_ids);

    std::unordered_map<std::string, Topic> topic_of;
    for (const NewsItem& it : r.items) topic_of[it.id] = it.topic;
    std::set<std::string> train = id_set(res.audit.train_ids);
    for (const std::string& id : res.audit.eval_ids) {
        Topic t = topic_of.at(id);
        CHECK((t == Topic::society || t == Topic::conflict));
        CHECK_FALSE(train.count(id));
    }
    for (const std::string& id : res.audit.train_ids) {
        Topic t = topic_of.at(id);
        CHECK((t != Topic::society && t != Topic::conflict));
    }
}

TEST_CASE("platform adaptation keeps only politics rows") {
    SynthConfig sc;
    sc.dim = 10;
    sc.samples_per_domain = 50;
    sc.seed = 19;
    sc.domains = {domain("po", "politics", "official", 2), domain("ps", "politics", "social", 2),
                  domain("co", "conflict", "official", 2)};
    SynthResult r = synth_generate(sc);
    MapProvider text(10, r.features);

    TaskInputs in;
    in.items = r.items;
    in.text = &text;
    in.split_seed = 1;
    in.stratify_by = "binary_label";
    in.model = tiny_model(10, 2);
    in.train = quick_train(3, 2);

    TaskSpec spec;
    spec.kind = TaskKind::adapt_platform;
    TaskResult res = run_task(spec, in);

    CHECK(res.audit.train_ids.size() + res.audit.val_ids.size() == 50);
    CHECK(res.audit.eval_ids.size() == 50);
    std::unordered_map<std::string, const NewsItem*> by_id;
    for (const NewsItem& it : r.items) by_id[it.id] = &it;
    for (const std::string& id : res.audit.train_ids) {
        CHECK(by_id.at(id)->topic == Topic::politics);
        CHECK(by_id.at(id)->platform == Platform::official);
    }
    for (const std::string& id : res.audit.eval_ids) {
        CHECK(by_id.at(id)->topic == Topic::politics);
        CHECK(by_id.at(id)->platform == Platform::social);
    }

    // The conflict rows fall outside both selectors entirely.
    std::set<std::string> used = id_set(res.audit.train_ids);
    for (const std::string& id : res.audit.val_ids) used.insert(id);
    for (const std::string& id : res.audit.eval_ids) used.insert(id);
    for (const NewsItem& it : r.items)
        if (it.topic == Topic::conflict) CHECK_FALSE(used.count(it.id));

    TaskSpec missing = spec;
    missing.target_platform = "fact-check";
    CHECK_THROWS_WITH(run_task(missing, in), Catch::Matchers::ContainsSubstring("fact-check"));
}

TEST_CASE("dual adaptation crosses topic and platform at once") {
    SynthConfig sc;
    sc.dim = 10;
    sc.samples_per_domain = 50;
    sc.seed = 23;
    sc.domains = {domain("co", "conflict", "official", 2), domain("ps", "politics", "social", 2),
                  domain("po", "politics", "official", 2), domain("cs", "conflict", "social", 2)};
    SynthResult r = synth_generate(sc);
    MapProvider text(10, r.features);

    TaskInputs in;
    in.items = r.items;
    in.text = &text;
    in.split_seed = 5;
    in.stratify_by = "binary_label";
    in.model = tiny_model(10, 2);
    in.train = quick_train(3, 4);

    TaskSpec spec;
    spec.kind = TaskKind::adapt_dual;
    TaskResult res = run_task(spec, in);

    std::unordered_map<std::string, const NewsItem*> by_id;
    for (const NewsItem& it : r.items) by_id[it.id] = &it;
    CHECK(res.audit.train_ids.size() + res.audit.val_ids.size() == 50);
    CHECK(res.audit.eval_ids.size() == 50);
    for (const std::string& id : res.audit.train_ids) {
        CHECK(by_id.at(id)->topic == Topic::conflict);
        CHECK(by_id.at(id)->platform == Platform::official);
    }
    for (const std::string& id : res.audit.eval_ids) {
        CHECK(by_id.at(id)->topic == Topic::politics);
        CHECK(by_id.at(id)->platform == Platform::social);
    }
}

TEST_CASE("adaptation without reweighting reports the unadjusted metrics") {
    SynthConfig sc;
    sc.dim = 8;
    sc.samples_per_domain = 25;
    sc.seed = 31;
    for (const std::string& t : topic_tokens()) sc.domains.push_back(domain(t, t, "official", 2));
    SynthResult r = synth_generate(sc);
    MapProvider text(8, r.features);

    TaskInputs in;
    in.items = r.items;
    in.text = &text;
    in.split_seed = 2;
    in.stratify_by = "binary_label";
    in.model = tiny_model(8, 2);
    in.train = quick_train(2, 6);
    in.reweight = false;

    TaskSpec spec;
    spec.kind = TaskKind::adapt_topic;
    TaskResult res = run_task(spec, in);
    CHECK_FALSE(res.adaptation.reweighted);
    CHECK(res.adaptation.weights.w.empty());
    CHECK(res.adaptation.post.accuracy == res.adaptation.pre.accuracy);
    CHECK(res.headline.accuracy == res.adaptation.pre.accuracy);
    CHECK(res.retrain_report.epochs.empty());
}

TEST_CASE("selector errors name the missing rows") {
    SynthConfig sc;
    sc.dim = 6;
    sc.samples_per_domain = 40;
    sc.seed = 37;
    sc.domains = {domain("p", "politics", "official", 2),
                  domain("e", "entertainment", "official", 2),
                  domain("b", "business", "official", 2), domain("h", "health", "official", 2)};
    SynthResult r = synth_generate(sc);  // no society or conflict rows at all
    MapProvider text(6, r.features);

    TaskInputs in;
    in.items = r.items;
    in.text = &text;
    in.model = tiny_model(6, 2);
    in.train = quick_train(1, 0);

    TaskSpec spec;
    spec.kind = TaskKind::adapt_topic;
    CHECK_THROWS_WITH(run_task(spec, in),
                      Catch::Matchers::ContainsSubstring("target topics society, conflict"));
}

TEST_CASE("too few source rows for a validation split is rejected") {
    SynthConfig sc;
    sc.dim = 6;
    sc.samples_per_domain = 2;
    sc.seed = 41;
    for (const std::string& t : topic_tokens()) sc.domains.push_back(domain(t, t, "official", 2));
    SynthResult r = synth_generate(sc);
    MapProvider text(6, r.features);

    TaskInputs in;
    in.items = r.items;
    in.text = &text;
    in.model = tiny_model(6, 2);
    in.train = quick_train(1, 0);

    TaskSpec spec;
    spec.kind = TaskKind::adapt_topic;  // 8 source rows, val floor(8/10) = 0
    CHECK_THROWS_WITH(run_task(spec, in),
                      Catch::Matchers::ContainsSubstring("no validation rows"));
}

TEST_CASE("identical runs reproduce identical results") {
    SynthConfig sc;
    sc.dim = 8;
    sc.samples_per_domain = 25;
    sc.seed = 43;
    for (const std::string& t : topic_tokens()) sc.domains.push_back(domain(t, t, "official", 2));
    SynthResult r = synth_generate(sc);
    MapProvider text(8, r.features);

    TaskInputs in;
    in.items = r.items;
    in.text = &text;
    in.split_seed = 9;
    in.stratify_by = "binary_label";
    in.model = tiny_model(8, 2);
    in.train = quick_train(3, 8);

    TaskSpec spec;
    spec.kind = TaskKind::adapt_topic;
    TaskResult a = run_task(spec, in);
    TaskResult b = run_task(spec, in);
    CHECK(a.audit.train_ids == b.audit.train_ids);
    CHECK(a.audit.eval_ids == b.audit.eval_ids);
    CHECK(a.headline.weighted_f1 == b.headline.weighted_f1);
    CHECK(a.adaptation.weights.w == b.adaptation.weights.w);
    CHECK(a.adaptation.pre.accuracy == b.adaptation.pre.accuracy);

    TaskInputs other = in;
    other.split_seed = 10;
    TaskResult c = run_task(spec, other);
    CHECK(a.audit.train_ids != c.audit.train_ids);
}
