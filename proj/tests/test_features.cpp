#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "kean/features.hpp"
#include "kean/knowledge.hpp"

using namespace kean;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

NewsItem text_item(const std::string& id, const std::string& text) {
    NewsItem it;
    it.id = id;
    it.text = text;
    return it;
}

// Reference FNV-1a 64, written out independently of the library.
uint64_t ref_fnv(const std::string& s, uint64_t seed) {
    uint64_t h = 14695981039346656037ull ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("tokenizer lowercases and splits on non-alphanumerics") {
    CHECK(TextHashProvider::tokenize("Hello, WORLD-99!") ==
          std::vector<std::string>{"hello", "world", "99"});
    CHECK(TextHashProvider::tokenize("") == std::vector<std::string>{});
    CHECK(TextHashProvider::tokenize("...!!!") == std::vector<std::string>{});
    // Bytes >= 0x80 count as word characters, keeping UTF-8 words intact.
    CHECK(TextHashProvider::tokenize("caf\xc3\xa9 bar") ==
          std::vector<std::string>{"caf\xc3\xa9", "bar"});
}

TEST_CASE("hashed text features are unit-length, deterministic, and signed") {
    TextHashProvider p(64, 17);
    FeatureVector a = p.features(text_item("x", "one two three"));
    FeatureVector b = p.features(text_item("y", "one two three"));
    CHECK(a.values == b.values);
    CHECK(a.present);
    CHECK(l2(a.values) == Catch::Approx(1.0).margin(1e-12));

    FeatureVector empty = p.features(text_item("z", "!!!"));
    CHECK(empty.values == std::vector<double>(64, 0.0));
    CHECK(empty.present);

    // Case and punctuation changes do not move the vector.
    FeatureVector c = p.features(text_item("w", "ONE, two THREE?"));
    CHECK(a.values == c.values);

    // A different seed relocates the buckets.
    TextHashProvider q(64, 18);
    CHECK(p.features(text_item("x", "one two three")).values !=
          q.features(text_item("x", "one two three")).values);
}

TEST_CASE("hashed counts match a by-hand trace") {
    const uint64_t seed = 5;
    const size_t dim = 16;
    TextHashProvider p(dim, seed);
    FeatureVector fv = p.features(text_item("x", "a b a"));

    std::vector<double> want(dim, 0.0);
    for (const std::string& tok : {std::string("a"), std::string("b"), std::string("a")}) {
        uint64_t h = ref_fnv(tok, seed);
        want[size_t((h >> 1) % dim)] += (h & 1) ? 1.0 : -1.0;
    }
    double n = l2(want);
    if (n > 0.0)
        for (double& v : want) v /= n;
    CHECK(fv.values == want);
}

TEST_CASE("opposite signs can cancel inside one bucket") {
    // With dim=1 every token lands in bucket 0 and only the sign bit matters.
    TextHashProvider p(1, 0);
    FeatureVector fv = p.features(text_item("x", "alpha beta"));
    uint64_t ha = ref_fnv("alpha", 0), hb = ref_fnv("beta", 0);
    double sum = ((ha & 1) ? 1.0 : -1.0) + ((hb & 1) ? 1.0 : -1.0);
    if (sum != 0.0) sum /= std::fabs(sum);
    CHECK(fv.values[0] == sum);
}

TEST_CASE("precomputed tables round-trip exactly and stay sorted") {
    std::unordered_map<std::string, std::vector<double>> vecs = {
        {"b", {0.5, -1.25, 3.0}},
        {"a", {1e-17, 2.0, -0.0039}},
    };
    std::string p = tmp_path("kean_pre.tsv");
    save_precomputed(vecs, 3, p);
    std::vector<std::string> lines = read_lines(p);
    REQUIRE(lines.size() >= 3);
    CHECK(lines[0] == "dim=3");
    CHECK(lines[1].substr(0, 2) == "a\t");
    CHECK(lines[2].substr(0, 2) == "b\t");

    auto back = load_precomputed(p);
    CHECK(back == vecs);

    PrecomputedProvider prov(p);
    CHECK(prov.dimension() == 3);
    CHECK(prov.size() == 2);
    FeatureVector hit = prov.features(text_item("a", ""));
    CHECK(hit.present);
    CHECK(hit.values == vecs["a"]);
    FeatureVector miss = prov.features(text_item("zzz", ""));
    CHECK_FALSE(miss.present);
    CHECK(miss.values == std::vector<double>(3, 0.0));
    std::remove(p.c_str());
}

TEST_CASE("precomputed loader rejects malformed tables with line numbers") {
    std::string p = tmp_path("kean_pre_bad.tsv");
    write_file(p, "nodim\n");
    CHECK_THROWS_WITH(load_precomputed(p), Catch::Matchers::ContainsSubstring("dim=<n>"));
    write_file(p, "dim=2\na\t1 2 3\n");
    CHECK_THROWS_WITH(load_precomputed(p), Catch::Matchers::ContainsSubstring(":2") &&
                                               Catch::Matchers::ContainsSubstring("expected 2"));
    write_file(p, "dim=2\na\t1 nan\n");
    CHECK_THROWS_WITH(load_precomputed(p), Catch::Matchers::ContainsSubstring("non-finite"));
    write_file(p, "dim=2\na\t1 2\na\t3 4\n");
    CHECK_THROWS_WITH(load_precomputed(p), Catch::Matchers::ContainsSubstring("duplicate id 'a'"));
    write_file(p, "dim=2\na\t1 2\n");
    CHECK_THROWS_WITH(load_precomputed(p, 5), Catch::Matchers::ContainsSubstring("expected 5"));
    CHECK_THROWS_AS(save_precomputed({{"a", {1.0}}}, 2, p), std::invalid_argument);
    std::remove(p.c_str());
}

TEST_CASE("image statistics on a handmade PPM") {
    // 2x1 P6 image, maxval 255: one red pixel, one black pixel.
    std::string img = tmp_path("kean_img.ppm");
    std::string bytes = "P6\n# comment\n2 1\n255\n";
    unsigned char px[6] = {255, 0, 0, 0, 0, 0};
    bytes.append(reinterpret_cast<char*>(px), 6);
    write_file(img, bytes);

    ImageStatsProvider prov(8);
    NewsItem it = text_item("x", "");
    it.image_ref = img;
    FeatureVector fv = prov.features(it);
    REQUIRE(fv.values.size() == 8);
    CHECK(fv.present);
    CHECK(l2(fv.values) == Catch::Approx(1.0).margin(1e-12));

    // Unnormalized stats: red mean 0.5, red var 0.25, green/blue zero, and the
    // two luminance bins split the pixels (lum 1/3 -> bin 0, lum 0 -> bin 0).
    std::vector<double> raw = {0.5, 0.0, 0.0, 0.25, 0.0, 0.0, 1.0, 0.0};
    double n = l2(raw);
    for (size_t i = 0; i < raw.size(); ++i)
        CHECK(fv.values[i] == Catch::Approx(raw[i] / n).margin(1e-12));
    std::remove(img.c_str());
}

TEST_CASE("non-PPM bytes fall back to byte statistics") {
    std::string f = tmp_path("kean_blob.bin");
    write_file(f, std::string("\x00\xff", 2));
    ImageStatsProvider prov(8);
    NewsItem it = text_item("x", "");
    it.image_ref = f;
    FeatureVector fv = prov.features(it);
    CHECK(fv.present);
    // mean (0 + 1)/2 = 0.5, var 0.25, bins: byte 0 -> bin 0, byte 255 -> bin 5.
    std::vector<double> raw = {0.5, 0.25, 1.0 / 2.0, 0, 0, 0, 0, 1.0 / 2.0};
    double n = l2(raw);
    for (size_t i = 0; i < 8; ++i) CHECK(fv.values[i] == Catch::Approx(raw[i] / n).margin(1e-12));
    std::remove(f.c_str());
}

TEST_CASE("image provider marks absent references and rejects bad files") {
    ImageStatsProvider prov(8);
    NewsItem no_image = text_item("x", "");
    FeatureVector fv = prov.features(no_image);
    CHECK_FALSE(fv.present);
    CHECK(fv.values == std::vector<double>(8, 0.0));

    NewsItem missing = text_item("y", "");
    missing.image_ref = tmp_path("kean_not_there.ppm");
    CHECK_THROWS_WITH(prov.features(missing), Catch::Matchers::ContainsSubstring("cannot open"));

    std::string trunc = tmp_path("kean_trunc.ppm");
    write_file(trunc, "P6\n4 4\n255\nxx");
    NewsItem bad = text_item("z", "");
    bad.image_ref = trunc;
    CHECK_THROWS_WITH(prov.features(bad), Catch::Matchers::ContainsSubstring("truncated"));
    std::remove(trunc.c_str());

    CHECK_THROWS_AS(ImageStatsProvider(7), std::invalid_argument);
}

TEST_CASE("knowledge provider pools the one-hop neighbourhood") {
    auto store = std::make_shared<KnowledgeStore>();
    size_t a = store->intern_entity("a");
    size_t b = store->intern_entity("b");
    store->intern_entity("c");
    size_t r = store->intern_relation("r");
    store->add_triplet(a, r, b);

    auto table = std::make_shared<EmbeddingTable>();
    table->dk = 2;
    table->entities = {{1.0, 0.0}, {0.0, 1.0}, {10.0, 10.0}};
    table->relations = {{0.0, 0.0}};

    std::vector<std::string> warnings;
    KnowledgeFeatureProvider prov(store, table,
                                  [&warnings](const std::string& w) { warnings.push_back(w); });
    CHECK(prov.dimension() == 2);

    NewsItem it = text_item("n1", "");
    it.entities = {{"a", 0.9}};
    FeatureVector fv = prov.features(it);
    CHECK(fv.present);
    // Subgraph of {a} pulls b; mean of (1,0) and (0,1).
    CHECK(fv.values == std::vector<double>{0.5, 0.5});

    it.entities = {{"a", 0.9}, {"ghost", 0.8}};
    fv = prov.features(it);
    CHECK(fv.present);
    CHECK(fv.values == std::vector<double>{0.5, 0.5});
    REQUIRE(warnings.size() == 1);
    CHECK_THAT(warnings[0], Catch::Matchers::ContainsSubstring("ghost"));

    it.entities = {{"ghost", 0.8}};
    fv = prov.features(it);
    CHECK_FALSE(fv.present);
    CHECK(fv.values == std::vector<double>(2, 0.0));

    it.entities.clear();
    CHECK_FALSE(prov.features(it).present);

    auto short_table = std::make_shared<EmbeddingTable>();
    short_table->dk = 2;
    short_table->entities = {{1.0, 0.0}};
    CHECK_THROWS_WITH(KnowledgeFeatureProvider(store, short_table),
                      Catch::Matchers::ContainsSubstring("does not cover"));
}

TEST_CASE("batch assembly respects null providers and flags missing rows") {
    TextHashProvider text(8, 3);
    std::vector<NewsItem> items = {text_item("a", "alpha beta"), text_item("b", "gamma")};
    ModalityBatch b = build_batch(items, &text, nullptr, nullptr, 8, 4, 2);
    CHECK(b.rows() == 2);
    CHECK(b.text.cols == 8);
    CHECK(b.visual.cols == 4);
    CHECK(b.knowledge.cols == 2);
    CHECK(b.text_mask == std::vector<uint8_t>{1, 1});
    CHECK(b.visual_mask == std::vector<uint8_t>{0, 0});
    CHECK(b.knowledge_mask == std::vector<uint8_t>{0, 0});
    for (double v : b.visual.values) CHECK(v == 0.0);

    CHECK_THROWS_WITH(build_batch(items, &text, nullptr, nullptr, 16, 4, 2),
                      Catch::Matchers::ContainsSubstring("emits 8"));
}

TEST_CASE("row selection and concatenation preserve all three modalities") {
    ModalityBatch b;
    b.text = DenseMatrix(2, 1);
    b.visual = DenseMatrix(2, 1);
    b.knowledge = DenseMatrix(2, 1);
    b.text(0, 0) = 1.0;
    b.text(1, 0) = 2.0;
    b.visual(0, 0) = 3.0;
    b.visual(1, 0) = 4.0;
    b.knowledge(0, 0) = 5.0;
    b.knowledge(1, 0) = 6.0;
    b.text_mask = {1, 0};
    b.visual_mask = {0, 1};
    b.knowledge_mask = {1, 1};

    ModalityBatch one = take_rows(b, {1});
    CHECK(one.rows() == 1);
    CHECK(one.text(0, 0) == 2.0);
    CHECK(one.visual(0, 0) == 4.0);
    CHECK(one.knowledge(0, 0) == 6.0);
    CHECK(one.text_mask == std::vector<uint8_t>{0});

    ModalityBatch two = concat_batches(one, take_rows(b, {0}));
    CHECK(two.rows() == 2);
    CHECK(two.text(0, 0) == 2.0);
    CHECK(two.text(1, 0) == 1.0);
    CHECK(two.knowledge_mask == std::vector<uint8_t>{1, 1});
    CHECK(two.visual_mask == std::vector<uint8_t>{1, 0});
}

TEST_CASE("fusion concatenates projections and zeroes masked rows") {
    // Identity-shaped projections: weights I, bias 0, relu activation; inputs
    // are positive so relu passes them through.
    Rng rng(1);
    FusionParams fp = init_fusion(1, 1, 1, 1, 1, 1, rng);
    fp.text_proj.weight(0, 0) = 1.0;
    fp.visual_proj.weight(0, 0) = 1.0;
    fp.knowledge_proj.weight(0, 0) = 1.0;

    ModalityBatch b;
    b.text = DenseMatrix(2, 1);
    b.visual = DenseMatrix(2, 1);
    b.knowledge = DenseMatrix(2, 1);
    b.text(0, 0) = 1.0;
    b.visual(0, 0) = 2.0;
    b.knowledge(0, 0) = 3.0;
    b.text(1, 0) = 4.0;
    b.visual(1, 0) = 5.0;
    b.knowledge(1, 0) = 6.0;
    b.text_mask = {1, 1};
    b.visual_mask = {1, 0};  // row 1 has no visual features
    b.knowledge_mask = {1, 1};

    GradTape tape;
    Tensor fused = fuse(tape, b, fp);
    REQUIRE(fused.value.rows == 2);
    REQUIRE(fused.value.cols == 3);
    CHECK(fused.value(0, 0) == 1.0);
    CHECK(fused.value(0, 1) == 2.0);
    CHECK(fused.value(0, 2) == 3.0);
    CHECK(fused.value(1, 0) == 4.0);
    CHECK(fused.value(1, 1) == 0.0);  // masked visual row
    CHECK(fused.value(1, 2) == 6.0);
}

TEST_CASE("provider kinds are stable identifiers") {
    TextHashProvider t(4, 0);
    CHECK(t.kind() == "hashing-text");
    ImageStatsProvider i(8);
    CHECK(i.kind() == "image-stats");
}
