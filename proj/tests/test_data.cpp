#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "dcan/data.hpp"
#include "dcan/error.hpp"

using namespace dcan;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/dcan_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

// Independent rule oracle: brute-force occurrence-pair scan, no shared code
// with apply_rules.
std::set<std::string> eval_rules_bruteforce(const RuleManifest& manifest,
                                            const std::string& text) {
    const auto tokens = split_whitespace(text);
    std::set<std::string> fired;
    for (const auto& rule : manifest.rules) {
        if (!rule.long_range) {
            for (const auto& trig : rule.triggers)
                for (const auto& tok : tokens)
                    if (tok == trig) fired.insert(rule.code);
        } else {
            std::vector<int64_t> pos_a, pos_b;
            for (int64_t i = 0; i < static_cast<int64_t>(tokens.size()); ++i) {
                if (tokens[static_cast<size_t>(i)] == rule.triggers[0]) pos_a.push_back(i);
                if (tokens[static_cast<size_t>(i)] == rule.triggers[1]) pos_b.push_back(i);
            }
            for (int64_t a : pos_a)
                for (int64_t b : pos_b)
                    if (std::abs(a - b) >= rule.gap) fired.insert(rule.code);
        }
    }
    return fired;
}

SynthSpec small_spec() {
    SynthSpec spec;
    spec.num_labels = 8;
    spec.train_docs = 60;
    spec.dev_docs = 20;
    spec.test_docs = 20;
    spec.filler_vocab = 60;
    spec.long_range_fraction = 0.25;
    spec.gap = 40;
    spec.len_min = 30;
    spec.len_max = 120;
    spec.seed = 99;
    return spec;
}

}  // namespace

TEST_CASE("load_dataset: empty file, single record, full round trip") {
    TempFile f("data_roundtrip.jsonl");
    {
        std::ofstream os(f.path);
    }
    CHECK(load_dataset(f.path).empty());

    std::vector<Document> docs = {{"d1", "some text here", {"c1", "c2"}},
                                  {"d2", "other; text... with punct", {}},
                                  {"d3", "", {"c9"}}};
    save_dataset(f.path, docs);
    const auto loaded = load_dataset(f.path);
    REQUIRE(loaded.size() == 3);
    for (size_t i = 0; i < docs.size(); ++i) {
        CHECK(loaded[i].id == docs[i].id);
        CHECK(loaded[i].text == docs[i].text);
        CHECK(loaded[i].codes == docs[i].codes);
    }
}

TEST_CASE("load_dataset: malformed line and duplicate id carry positions") {
    TempFile f("data_bad.jsonl");
    {
        std::ofstream os(f.path);
        os << R"({"id":"a","text":"x","codes":[]})" << "\n";
        os << "this is not json\n";
    }
    try {
        load_dataset(f.path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    {
        std::ofstream os(f.path);
        os << R"({"id":"dup","text":"x","codes":[]})" << "\n";
        os << R"({"id":"dup","text":"y","codes":[]})" << "\n";
    }
    try {
        load_dataset(f.path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("dup") != std::string::npos);
    }
    {
        std::ofstream os(f.path);
        os << R"({"id":"a","codes":[]})" << "\n";  // missing text
    }
    CHECK_THROWS_AS(load_dataset(f.path), ParseError);
    {
        std::ofstream os(f.path);
        os << R"({"id":"a","text":"unlabeled input"})" << "\n";  // codes optional
    }
    CHECK(load_dataset(f.path).size() == 1);
}

TEST_CASE("generate_synthetic: deterministic per seed") {
    const SynthSpec spec = small_spec();
    auto c1 = generate_synthetic(spec);
    auto c2 = generate_synthetic(spec);
    REQUIRE(c1.train.size() == c2.train.size());
    for (size_t i = 0; i < c1.train.size(); ++i) {
        CHECK(c1.train[i].id == c2.train[i].id);
        CHECK(c1.train[i].text == c2.train[i].text);
        CHECK(c1.train[i].codes == c2.train[i].codes);
    }
    SynthSpec other = spec;
    other.seed = 100;
    auto c3 = generate_synthetic(other);
    bool any_diff = false;
    for (size_t i = 0; i < c1.train.size(); ++i) any_diff |= c1.train[i].text != c3.train[i].text;
    CHECK(any_diff);
}

TEST_CASE("generate_synthetic: manifest rules reproduce every code set exactly") {
    auto corpus = generate_synthetic(small_spec());
    int64_t positives = 0;
    for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
        for (const auto& doc : *split) {
            const auto expect = eval_rules_bruteforce(corpus.manifest, doc.text);
            const std::set<std::string> got(doc.codes.begin(), doc.codes.end());
            CHECK(got == expect);
            positives += static_cast<int64_t>(doc.codes.size());
        }
    }
    CHECK(positives > 0);

    // every label fires somewhere in the training split
    std::set<std::string> seen;
    for (const auto& doc : corpus.train) seen.insert(doc.codes.begin(), doc.codes.end());
    CHECK(seen.size() == static_cast<size_t>(small_spec().num_labels));
}

TEST_CASE("apply_rules: single trigger fires alone, near pairs do not fire") {
    auto corpus = generate_synthetic(small_spec());
    const auto& rules = corpus.manifest.rules;

    const LabelRule* single = nullptr;
    const LabelRule* pair = nullptr;
    for (const auto& r : rules) (r.long_range ? pair : single) = &r;
    REQUIRE(single != nullptr);
    REQUIRE(pair != nullptr);

    std::string text = "xxaa yybb " + single->triggers[0] + " zzcc";
    auto fired = apply_rules(corpus.manifest, split_whitespace(text));
    CHECK(fired == std::vector<std::string>{single->code});

    // both pair members present but only 2 apart: the long-range label stays off
    std::string near = pair->triggers[0] + " foo " + pair->triggers[1];
    CHECK(apply_rules(corpus.manifest, split_whitespace(near)).empty());

    // separated by >= gap positions: fires
    std::vector<std::string> far(static_cast<size_t>(pair->gap + 1), "pad");
    far.front() = pair->triggers[0];
    far.back() = pair->triggers[1];
    CHECK(apply_rules(corpus.manifest, far) == std::vector<std::string>{pair->code});
}

TEST_CASE("generate_synthetic: ids are disjoint across splits, validation errors") {
    auto corpus = generate_synthetic(small_spec());
    std::set<std::string> ids;
    size_t total = 0;
    for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
        total += split->size();
        for (const auto& doc : *split) ids.insert(doc.id);
    }
    CHECK(ids.size() == total);

    SynthSpec bad = small_spec();
    bad.len_max = bad.gap;  // cannot host a positive pair
    CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);
    bad = small_spec();
    bad.long_range_fraction = 1.5;
    CHECK_THROWS_AS(generate_synthetic(bad), std::invalid_argument);

    CHECK_THROWS_AS(
        check_trigger_collision({{.code = "c", .long_range = false, .triggers = {"boom"}, .gap = 0}},
                                {"filler", "boom"}),
        std::runtime_error);
}

TEST_CASE("manifest: save/load round trip") {
    auto corpus = generate_synthetic(small_spec());
    TempFile f("manifest.json");
    save_manifest(f.path, corpus.manifest);
    auto loaded = load_manifest(f.path);
    REQUIRE(loaded.rules.size() == corpus.manifest.rules.size());
    for (size_t i = 0; i < loaded.rules.size(); ++i) {
        CHECK(loaded.rules[i].code == corpus.manifest.rules[i].code);
        CHECK(loaded.rules[i].long_range == corpus.manifest.rules[i].long_range);
        CHECK(loaded.rules[i].triggers == corpus.manifest.rules[i].triggers);
        CHECK(loaded.rules[i].gap == corpus.manifest.rules[i].gap);
    }
    CHECK(loaded.spec.seed == corpus.manifest.spec.seed);
}

TEST_CASE("label_space and to_examples: multi-hot encoding and strictness") {
    std::vector<Document> docs = {{"a", "zz yy", {"c2", "c1"}},
                                  {"b", "yy", {"c1"}},
                                  {"c", "!!", {}}};
    const auto labels = label_space(docs);
    CHECK(labels == std::vector<std::string>{"c1", "c2"});

    auto vocab = build_vocab({{"zz", "yy"}}, 1);
    auto examples = to_examples(docs, vocab, labels, 2500, true);
    REQUIRE(examples.size() == 3);
    CHECK(examples[0].labels == std::vector<uint8_t>{1, 1});
    CHECK(examples[1].labels == std::vector<uint8_t>{1, 0});
    CHECK(examples[2].labels == std::vector<uint8_t>{0, 0});
    // the empty document substitutes one UNK token
    CHECK(examples[2].token_ids == std::vector<int32_t>{Vocabulary::kUnk});

    std::vector<Document> alien = {{"x", "zz", {"mystery"}}};
    CHECK_THROWS_AS(to_examples(alien, vocab, labels, 2500, true), std::invalid_argument);
    auto lax = to_examples(alien, vocab, labels, 2500, false);
    CHECK(lax[0].labels == std::vector<uint8_t>{0, 0});
}

TEST_CASE("make_batches: padding, masks, order, multiset preservation") {
    std::vector<LabeledExample> examples;
    for (int i = 0; i < 7; ++i) {
        LabeledExample ex;
        ex.id = "e" + std::to_string(i);
        ex.token_ids.assign(static_cast<size_t>(2 + i), static_cast<int32_t>(5 + i));
        ex.labels = {static_cast<uint8_t>(i % 2), 1};
        examples.push_back(ex);
    }
    RngStream rng(7);

    auto singles = make_batches(examples, 1, rng, false);
    REQUIRE(singles.size() == 7);
    for (size_t i = 0; i < singles.size(); ++i) {
        CHECK(singles[i].cols == static_cast<int64_t>(examples[i].token_ids.size()));
        CHECK(singles[i].n_valid[0] == singles[i].cols);  // batch of one never pads
    }

    auto ordered = make_batches(examples, 3, rng, false);
    REQUIRE(ordered.size() == 3);
    CHECK(ordered[0].rows == 3);
    CHECK(ordered[2].rows == 1);
    CHECK(ordered[0].row_ids(0)[0] == 5);

    // mask marks exactly the real tokens and padding is trailing PAD
    const Batch& b0 = ordered[0];
    CHECK(b0.cols == 4);
    for (int64_t r = 0; r < b0.rows; ++r) {
        const int64_t n = b0.n_valid[static_cast<size_t>(r)];
        for (int64_t t = 0; t < b0.cols; ++t) {
            const bool real = t < n;
            CHECK(b0.mask[static_cast<size_t>(r * b0.cols + t)] == (real ? 1 : 0));
            if (!real) CHECK(b0.ids[static_cast<size_t>(r * b0.cols + t)] == Vocabulary::kPad);
        }
    }

    // union of shuffled batches equals the input multiset
    auto shuffled = make_batches(examples, 2, rng, true);
    std::multiset<std::vector<int32_t>> seen, want;
    for (const auto& ex : examples) want.insert(ex.token_ids);
    for (const auto& batch : shuffled)
        for (int64_t r = 0; r < batch.rows; ++r) {
            auto row = batch.row_ids(r);
            row.resize(static_cast<size_t>(batch.n_valid[static_cast<size_t>(r)]));
            seen.insert(row);
        }
    CHECK(seen == want);

    CHECK_THROWS_AS(make_batches({}, 4, rng, false), std::invalid_argument);
    CHECK_THROWS_AS(make_batches(examples, 0, rng, false), std::invalid_argument);
}
