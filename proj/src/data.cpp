#include "dcan/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "dcan/error.hpp"

namespace dcan {

namespace {

using nlohmann::json;

json doc_to_json(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["text"] = doc.text;
    j["codes"] = doc.codes;
    return j;
}

Document doc_from_json(const json& j, int64_t line_no, const std::string& path) {
    const auto fail = [&](const std::string& what) -> ParseError {
        return ParseError(path + ": line " + std::to_string(line_no) + ": " + what);
    };
    if (!j.is_object()) throw fail("record is not an object");
    if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string field 'id'");
    if (!j.contains("text") || !j["text"].is_string()) throw fail("missing string field 'text'");
    Document doc;
    doc.id = j["id"].get<std::string>();
    doc.text = j["text"].get<std::string>();
    if (j.contains("codes")) {
        if (!j["codes"].is_array()) throw fail("field 'codes' is not an array");
        for (const auto& c : j["codes"]) {
            if (!c.is_string()) throw fail("field 'codes' holds a non-string entry");
            doc.codes.push_back(c.get<std::string>());
        }
    }
    return doc;
}

// Spells idx in lowercase letters, 'a' .. 'z', least significant last.
std::string letters(int64_t idx, int64_t width) {
    std::string s(static_cast<size_t>(width), 'a');
    for (int64_t i = width - 1; i >= 0; --i) {
        s[static_cast<size_t>(i)] = static_cast<char>('a' + idx % 26);
        idx /= 26;
    }
    return s;
}

}  // namespace

std::vector<Document> load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset file: " + path);
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError(path + ": line " + std::to_string(line_no) + ": invalid JSON");
        Document doc = doc_from_json(j, line_no, path);
        if (!seen.insert(doc.id).second)
            throw ParseError(path + ": line " + std::to_string(line_no) + ": duplicate id '" +
                             doc.id + "'");
        docs.push_back(std::move(doc));
    }
    return docs;
}

void save_dataset(const std::string& path, const std::vector<Document>& docs) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open dataset file for writing: " + path);
    for (const auto& doc : docs) os << doc_to_json(doc).dump() << '\n';
    if (!os) throw IoError("failed writing dataset file: " + path);
}

void SynthSpec::validate() const {
    if (num_labels < 1) throw std::invalid_argument("synth: num_labels must be positive");
    if (train_docs < 1) throw std::invalid_argument("synth: train_docs must be positive");
    if (dev_docs < 0 || test_docs < 0)
        throw std::invalid_argument("synth: split sizes must be non-negative");
    if (filler_vocab < 1) throw std::invalid_argument("synth: filler_vocab must be positive");
    if (triggers_per_label < 1)
        throw std::invalid_argument("synth: triggers_per_label must be positive");
    if (long_range_fraction < 0.0 || long_range_fraction > 1.0)
        throw std::invalid_argument("synth: long_range_fraction must lie in [0, 1]");
    if (gap < 1) throw std::invalid_argument("synth: gap must be positive");
    if (len_min < 1 || len_max < len_min)
        throw std::invalid_argument("synth: document length range is invalid");
    if (long_range_labels() > 0 && len_max < gap + 2)
        throw std::invalid_argument(
            "synth: len_max too small to plant a trigger pair separated by gap");
}

std::vector<std::string> split_whitespace(const std::string& text) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream is(text);
    while (is >> tok) out.push_back(tok);
    return out;
}

std::vector<std::string> apply_rules(const RuleManifest& manifest,
                                     const std::vector<std::string>& tokens) {
    std::unordered_map<std::string, std::pair<int64_t, int64_t>> occurrence;  // first, last
    for (int64_t pos = 0; pos < static_cast<int64_t>(tokens.size()); ++pos) {
        auto [it, inserted] = occurrence.try_emplace(tokens[static_cast<size_t>(pos)], pos, pos);
        if (!inserted) it->second.second = pos;
    }
    std::vector<std::string> fired;
    for (const auto& rule : manifest.rules) {
        bool hit = false;
        if (!rule.long_range) {
            for (const auto& t : rule.triggers)
                if (occurrence.count(t)) {
                    hit = true;
                    break;
                }
        } else {
            auto a = occurrence.find(rule.triggers.at(0));
            auto b = occurrence.find(rule.triggers.at(1));
            if (a != occurrence.end() && b != occurrence.end()) {
                // Some occurrence pair at distance >= gap exists iff the
                // extreme positions reach that far in either direction.
                const int64_t forward = b->second.second - a->second.first;
                const int64_t backward = a->second.second - b->second.first;
                hit = std::max(forward, backward) >= rule.gap;
            }
        }
        if (hit) fired.push_back(rule.code);
    }
    return fired;
}

void check_trigger_collision(const std::vector<LabelRule>& rules,
                             const std::vector<std::string>& filler) {
    std::unordered_set<std::string> filler_set(filler.begin(), filler.end());
    std::unordered_set<std::string> trigger_set;
    for (const auto& rule : rules)
        for (const auto& t : rule.triggers) {
            if (filler_set.count(t))
                throw std::runtime_error("synthetic generation: trigger '" + t +
                                         "' collides with the filler vocabulary");
            if (!trigger_set.insert(t).second)
                throw std::runtime_error("synthetic generation: trigger '" + t +
                                         "' assigned to two rules");
        }
}

namespace {

// Planting rates per document and label; documents stay negative for a label
// unless its event fires. Near-pair and lone-member plants create hard
// negatives for long-range rules.
constexpr double kPlantPositive = 0.12;
constexpr double kPlantNearPair = 0.08;
constexpr double kPlantLoneMember = 0.04;
// Planted positive pairs keep their separation within gap + kPairWindow so a
// receptive field covering the gap also covers every planted positive.
constexpr int64_t kPairWindow = 200;

Document make_doc(const std::string& id, const SynthSpec& spec,
                  const std::vector<std::string>& filler, const RuleManifest& manifest,
                  RngStream& rng) {
    const int64_t len = spec.len_min + static_cast<int64_t>(rng.below(
                                           static_cast<uint64_t>(spec.len_max - spec.len_min + 1)));
    std::vector<std::string> tokens(static_cast<size_t>(len));
    for (auto& t : tokens) t = filler[rng.below(filler.size())];

    for (const auto& rule : manifest.rules) {
        const double r = rng.uniform();
        if (!rule.long_range) {
            if (r < kPlantPositive) {
                const auto& trig = rule.triggers[rng.below(rule.triggers.size())];
                tokens[rng.below(tokens.size())] = trig;
            }
            continue;
        }
        if (r < kPlantPositive) {
            if (len < spec.gap + 2) continue;  // too short to host a positive pair
            const int64_t max_dist = std::min<int64_t>(len - 1, spec.gap + kPairWindow);
            const int64_t dist =
                spec.gap + static_cast<int64_t>(rng.below(
                               static_cast<uint64_t>(max_dist - spec.gap + 1)));
            const int64_t start =
                static_cast<int64_t>(rng.below(static_cast<uint64_t>(len - dist)));
            tokens[static_cast<size_t>(start)] = rule.triggers[0];
            tokens[static_cast<size_t>(start + dist)] = rule.triggers[1];
        } else if (r < kPlantPositive + kPlantNearPair) {
            const int64_t max_dist = std::min<int64_t>(len - 1, spec.gap - 1);
            if (max_dist < 1) continue;
            const int64_t dist =
                1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(max_dist)));
            const int64_t start =
                static_cast<int64_t>(rng.below(static_cast<uint64_t>(len - dist)));
            tokens[static_cast<size_t>(start)] = rule.triggers[0];
            tokens[static_cast<size_t>(start + dist)] = rule.triggers[1];
        } else if (r < kPlantPositive + kPlantNearPair + kPlantLoneMember) {
            const auto& trig = rule.triggers[rng.below(2)];
            tokens[rng.below(tokens.size())] = trig;
        }
    }

    Document doc;
    doc.id = id;
    doc.codes = apply_rules(manifest, tokens);
    std::ostringstream text;
    for (size_t i = 0; i < tokens.size(); ++i) text << (i ? " " : "") << tokens[i];
    doc.text = text.str();
    return doc;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    RngStream rng(spec.seed);

    // Filler words: random 4-8 letter strings; the "zq" prefix is reserved
    // for triggers so the collision check cannot fire by construction.
    std::vector<std::string> filler;
    std::unordered_set<std::string> used;
    while (static_cast<int64_t>(filler.size()) < spec.filler_vocab) {
        const int64_t len = 4 + static_cast<int64_t>(rng.below(5));
        std::string word;
        for (int64_t i = 0; i < len; ++i)
            word.push_back(static_cast<char>('a' + rng.below(26)));
        if (word.rfind("zq", 0) == 0) continue;
        if (used.insert(word).second) filler.push_back(word);
    }

    const int64_t digits = std::max<int64_t>(2, std::to_string(spec.num_labels - 1).size());
    const int64_t long_range = spec.long_range_labels();
    RuleManifest manifest;
    manifest.spec = spec;
    for (int64_t j = 0; j < spec.num_labels; ++j) {
        LabelRule rule;
        std::string idx = std::to_string(j);
        rule.code = "code" + std::string(static_cast<size_t>(digits) - idx.size(), '0') + idx;
        if (j < long_range) {
            rule.long_range = true;
            rule.gap = spec.gap;
            rule.triggers = {"zq" + letters(j, 3) + "a", "zq" + letters(j, 3) + "b"};
        } else {
            for (int64_t t = 0; t < spec.triggers_per_label; ++t)
                rule.triggers.push_back("zq" + letters(j, 3) + letters(t, 2));
        }
        manifest.rules.push_back(std::move(rule));
    }
    check_trigger_collision(manifest.rules, filler);

    SynthCorpus corpus;
    corpus.manifest = manifest;
    const auto fill_split = [&](std::vector<Document>& split, const std::string& name,
                                int64_t count) {
        for (int64_t i = 0; i < count; ++i) {
            std::string num = std::to_string(i);
            std::string id = name + "-" + std::string(6 - std::min<size_t>(6, num.size()), '0') + num;
            split.push_back(make_doc(id, spec, filler, manifest, rng));
        }
    };
    fill_split(corpus.train, "train", spec.train_docs);
    fill_split(corpus.dev, "dev", spec.dev_docs);
    fill_split(corpus.test, "test", spec.test_docs);
    return corpus;
}

void save_manifest(const std::string& path, const RuleManifest& manifest) {
    json j;
    j["spec"] = {{"num_labels", manifest.spec.num_labels},
                 {"train_docs", manifest.spec.train_docs},
                 {"dev_docs", manifest.spec.dev_docs},
                 {"test_docs", manifest.spec.test_docs},
                 {"filler_vocab", manifest.spec.filler_vocab},
                 {"triggers_per_label", manifest.spec.triggers_per_label},
                 {"long_range_fraction", manifest.spec.long_range_fraction},
                 {"gap", manifest.spec.gap},
                 {"len_min", manifest.spec.len_min},
                 {"len_max", manifest.spec.len_max},
                 {"seed", manifest.spec.seed}};
    j["rules"] = json::array();
    for (const auto& rule : manifest.rules) {
        json r;
        r["code"] = rule.code;
        r["type"] = rule.long_range ? "pair" : "single";
        r["triggers"] = rule.triggers;
        if (rule.long_range) r["gap"] = rule.gap;
        j["rules"].push_back(r);
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open manifest file for writing: " + path);
    os << j.dump(2) << '\n';
    if (!os) throw IoError("failed writing manifest file: " + path);
}

RuleManifest load_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open manifest file: " + path);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ParseError(path + ": invalid JSON manifest");
    RuleManifest manifest;
    try {
        const auto& s = j.at("spec");
        manifest.spec.num_labels = s.at("num_labels").get<int64_t>();
        manifest.spec.train_docs = s.at("train_docs").get<int64_t>();
        manifest.spec.dev_docs = s.at("dev_docs").get<int64_t>();
        manifest.spec.test_docs = s.at("test_docs").get<int64_t>();
        manifest.spec.filler_vocab = s.at("filler_vocab").get<int64_t>();
        manifest.spec.triggers_per_label = s.at("triggers_per_label").get<int64_t>();
        manifest.spec.long_range_fraction = s.at("long_range_fraction").get<double>();
        manifest.spec.gap = s.at("gap").get<int64_t>();
        manifest.spec.len_min = s.at("len_min").get<int64_t>();
        manifest.spec.len_max = s.at("len_max").get<int64_t>();
        manifest.spec.seed = s.at("seed").get<uint64_t>();
        for (const auto& r : j.at("rules")) {
            LabelRule rule;
            rule.code = r.at("code").get<std::string>();
            rule.long_range = r.at("type").get<std::string>() == "pair";
            rule.triggers = r.at("triggers").get<std::vector<std::string>>();
            if (rule.long_range) rule.gap = r.at("gap").get<int64_t>();
            manifest.rules.push_back(std::move(rule));
        }
    } catch (const json::exception& e) {
        throw ParseError(path + ": manifest field error: " + e.what());
    }
    return manifest;
}

std::vector<std::string> label_space(const std::vector<Document>& docs) {
    std::set<std::string> codes;
    for (const auto& doc : docs) codes.insert(doc.codes.begin(), doc.codes.end());
    return {codes.begin(), codes.end()};
}

std::vector<LabeledExample> to_examples(const std::vector<Document>& docs,
                                        const Vocabulary& vocab,
                                        const std::vector<std::string>& labels, int64_t max_len,
                                        bool strict_codes) {
    std::unordered_map<std::string, int64_t> label_index;
    for (size_t j = 0; j < labels.size(); ++j) label_index.emplace(labels[j], j);

    std::vector<LabeledExample> out;
    out.reserve(docs.size());
    for (const auto& doc : docs) {
        LabeledExample ex;
        ex.id = doc.id;
        ex.token_ids = encode(preprocess(doc.text, max_len), vocab);
        if (ex.token_ids.empty()) ex.token_ids.push_back(Vocabulary::kUnk);
        ex.labels.assign(labels.size(), 0);
        for (const auto& code : doc.codes) {
            auto it = label_index.find(code);
            if (it == label_index.end()) {
                if (strict_codes)
                    throw std::invalid_argument("document '" + doc.id + "' carries code '" +
                                                code + "' outside the label space");
                continue;
            }
            ex.labels[static_cast<size_t>(it->second)] = 1;
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<Batch> make_batches(const std::vector<LabeledExample>& examples, int64_t batch_size,
                                RngStream& rng, bool shuffle) {
    if (examples.empty()) throw std::invalid_argument("make_batches: empty example list");
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be positive");

    std::vector<int64_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    if (shuffle) rng.shuffle(order);

    const int64_t m = static_cast<int64_t>(examples.front().labels.size());
    std::vector<Batch> batches;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
        Batch batch;
        batch.rows = static_cast<int64_t>(end - start);
        batch.num_labels = m;
        for (size_t i = start; i < end; ++i)
            batch.cols = std::max(batch.cols, static_cast<int64_t>(
                                                  examples[static_cast<size_t>(order[i])]
                                                      .token_ids.size()));
        batch.ids.assign(static_cast<size_t>(batch.rows * batch.cols), Vocabulary::kPad);
        batch.mask.assign(static_cast<size_t>(batch.rows * batch.cols), 0);
        batch.labels.assign(static_cast<size_t>(batch.rows * m), 0);
        for (size_t i = start; i < end; ++i) {
            const auto& ex = examples[static_cast<size_t>(order[i])];
            if (static_cast<int64_t>(ex.labels.size()) != m)
                throw ShapeError("make_batches: inconsistent label vector lengths");
            const int64_t r = static_cast<int64_t>(i - start);
            for (size_t t = 0; t < ex.token_ids.size(); ++t) {
                batch.ids[static_cast<size_t>(r * batch.cols) + t] = ex.token_ids[t];
                batch.mask[static_cast<size_t>(r * batch.cols) + t] = 1;
            }
            std::copy(ex.labels.begin(), ex.labels.end(),
                      batch.labels.begin() + r * m);
            batch.n_valid.push_back(static_cast<int64_t>(ex.token_ids.size()));
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace dcan
