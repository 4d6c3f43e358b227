#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dcan/rng.hpp"
#include "dcan/textpipe.hpp"

namespace dcan {

struct Document {
    std::string id;
    std::string text;
    std::vector<std::string> codes;
};

// Line-delimited records (one JSON object per line with id, text, codes).
// Order-preserving; duplicate ids and malformed lines are rejected with the
// offending line number. A missing codes field reads as an empty set so
// unlabeled prediction inputs load too.
std::vector<Document> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<Document>& docs);

// One planted rule per label: a single trigger token, or for long-range
// labels a token pair that must co-occur separated by at least `gap`
// positions.
struct LabelRule {
    std::string code;
    bool long_range = false;
    std::vector<std::string> triggers;  // alternatives for single, {a, b} for pairs
    int64_t gap = 0;
};

struct SynthSpec {
    int64_t num_labels = 20;
    int64_t train_docs = 2000;
    int64_t dev_docs = 400;
    int64_t test_docs = 400;
    int64_t filler_vocab = 500;
    int64_t triggers_per_label = 1;
    double long_range_fraction = 0.25;
    int64_t gap = 300;
    int64_t len_min = 200;
    int64_t len_max = 1000;
    uint64_t seed = 777;

    int64_t long_range_labels() const {
        return static_cast<int64_t>(std::llround(long_range_fraction * double(num_labels)));
    }
    void validate() const;
};

struct RuleManifest {
    SynthSpec spec;
    std::vector<LabelRule> rules;
};

struct SynthCorpus {
    std::vector<Document> train, dev, test;
    RuleManifest manifest;
};

// Deterministic per seed. Labels are exactly the rules that fire on the final
// token sequence, so rule evaluation recovers every document's code set.
SynthCorpus generate_synthetic(const SynthSpec& spec);

// Rule evaluation oracle over a whitespace-tokenized document.
std::vector<std::string> apply_rules(const RuleManifest& manifest,
                                     const std::vector<std::string>& tokens);
std::vector<std::string> split_whitespace(const std::string& text);

// Throws when any trigger token collides with the filler vocabulary.
void check_trigger_collision(const std::vector<LabelRule>& rules,
                             const std::vector<std::string>& filler);

void save_manifest(const std::string& path, const RuleManifest& manifest);
RuleManifest load_manifest(const std::string& path);

struct LabeledExample {
    std::string id;
    std::vector<int32_t> token_ids;  // never empty; empty docs become {UNK}
    std::vector<uint8_t> labels;     // multi-hot, length m
};

// Sorted unique code strings across a document set; index order defines the
// label space.
std::vector<std::string> label_space(const std::vector<Document>& docs);

// preprocess + encode + multi-hot labels. strict_codes rejects codes outside
// the label space (checkpoint/dataset mismatch); otherwise they are ignored.
std::vector<LabeledExample> to_examples(const std::vector<Document>& docs,
                                        const Vocabulary& vocab,
                                        const std::vector<std::string>& labels, int64_t max_len,
                                        bool strict_codes);

struct Batch {
    int64_t rows = 0;
    int64_t cols = 0;  // max sequence length within the batch
    int64_t num_labels = 0;
    std::vector<int32_t> ids;      // rows x cols, PAD-padded on the right
    std::vector<uint8_t> mask;     // rows x cols, 1 marks a real token
    std::vector<uint8_t> labels;   // rows x num_labels
    std::vector<int64_t> n_valid;  // per row, count of real tokens

    std::vector<int32_t> row_ids(int64_t r) const {
        return {ids.begin() + r * cols, ids.begin() + (r + 1) * cols};
    }
};

std::vector<Batch> make_batches(const std::vector<LabeledExample>& examples, int64_t batch_size,
                                RngStream& rng, bool shuffle);

}  // namespace dcan
