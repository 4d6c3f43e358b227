#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dcan/checkpoint.hpp"
#include "dcan/data.hpp"
#include "dcan/error.hpp"
#include "dcan/metrics.hpp"
#include "dcan/model.hpp"
#include "dcan/textpipe.hpp"
#include "dcan/train.hpp"

namespace dcan::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ensure_out_dir(const RunConfig& cfg) {
    fs::create_directories(cfg.paths.out);
    return cfg.paths.out;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << content;
    if (!os) throw IoError("failed writing: " + path);
}

// The effective configuration (defaults + file + overrides) lands next to
// every command's outputs; re-running from that echo reproduces the results.
void echo_config(const RunConfig& cfg, const std::string& out_dir) {
    write_text(out_dir + "/effective_config.json", run_config_to_json(cfg).dump(2) + "\n");
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "na"; }

std::string history_line(const EpochRecord& r) {
    std::ostringstream os;
    os << "epoch=" << r.epoch << " train_loss=" << fmt(r.train_loss)
       << " dev_macro_auc=" << fmt(r.dev.macro_auc) << " dev_micro_auc=" << fmt(r.dev.micro_auc)
       << " dev_macro_f1=" << fmt(r.dev.macro_f1) << " dev_micro_f1=" << fmt(r.dev.micro_f1)
       << " dev_p_at_" << r.dev.k << "=" << fmt(r.dev.precision_at_k);
    return os.str();
}

std::string param_report(const std::vector<std::pair<std::string, int64_t>>& counts) {
    std::ostringstream os;
    for (const auto& [name, count] : counts) os << name << " " << count << "\n";
    return os.str();
}

std::vector<Document> load_required(const std::string& path, const char* role) {
    if (path.empty())
        throw std::invalid_argument(std::string("paths.") + role + " is required");
    auto docs = load_dataset(path);
    if (docs.empty()) throw std::invalid_argument(std::string(role) + " split is empty: " + path);
    return docs;
}

template <typename T>
int run_train(const RunConfig& cfg) {
    const std::string out_dir = ensure_out_dir(cfg);
    echo_config(cfg, out_dir);

    const auto train_docs = load_required(cfg.paths.train, "train");
    const auto dev_docs = load_required(cfg.paths.dev, "dev");

    Vocabulary vocab;
    std::vector<std::string> labels;
    ModelConfig model_cfg;
    ModelParams<T> params;
    AdamState<T> adam;
    RngStream rng(cfg.train.seed);
    int64_t epoch_offset = 0;

    if (!cfg.paths.resume.empty()) {
        auto ckpt = checkpoint_load<T>(cfg.paths.resume);
        const ModelConfig requested =
            cfg.make_model_config(ckpt.config.vocab_size, ckpt.config.num_labels);
        if (!(requested == ckpt.config))
            throw std::invalid_argument(
                "resume: model settings in the config disagree with the checkpoint");
        vocab = ckpt.vocab;
        labels = ckpt.labels;
        model_cfg = ckpt.config;
        params = ckpt.params;
        adam = ckpt.adam;
        adam.lr = cfg.train.lr;
        rng.set_state(ckpt.rng_state);
        epoch_offset = ckpt.epoch;
        std::cout << "resumed from " << cfg.paths.resume << " at epoch " << epoch_offset
                  << ", step " << adam.step << "\n";
    } else {
        if (!cfg.paths.vocab.empty()) {
            vocab = load_vocab(cfg.paths.vocab);
            vocab.min_frequency = cfg.data.min_frequency;
        } else {
            std::vector<std::vector<std::string>> token_lists;
            token_lists.reserve(train_docs.size());
            for (const auto& doc : train_docs)
                token_lists.push_back(preprocess(doc.text, cfg.max_len));
            vocab = build_vocab(token_lists, cfg.data.min_frequency);
        }
        std::vector<Document> labeled = train_docs;
        labeled.insert(labeled.end(), dev_docs.begin(), dev_docs.end());
        labels = label_space(labeled);
        if (labels.empty())
            throw std::invalid_argument("training split carries no codes at all");
        model_cfg = cfg.make_model_config(vocab.size(), static_cast<int64_t>(labels.size()));
        params = init_params<T>(model_cfg, rng);
        adam = AdamState<T>::fresh(params, cfg.train.lr);
    }

    const auto train_set = to_examples(train_docs, vocab, labels, model_cfg.max_len, true);
    const auto dev_set = to_examples(dev_docs, vocab, labels, model_cfg.max_len, true);

    const std::string counts = param_report(parameter_counts(params));
    std::cout << "trainable parameters per component:\n" << counts;
    write_text(out_dir + "/param_counts.txt", counts);

    std::ofstream history(out_dir + "/history.txt",
                          std::ios::binary | (epoch_offset > 0 ? std::ios::app : std::ios::trunc));
    if (!history) throw IoError("cannot open history file in " + out_dir);

    double best_metric = -std::numeric_limits<double>::infinity();
    const auto snapshot = [&](int64_t global_epoch) {
        TrainerCheckpoint<T> ckpt;
        ckpt.config = model_cfg;
        ckpt.labels = labels;
        ckpt.vocab = vocab;
        ckpt.params = params;
        ckpt.adam = adam;
        ckpt.epoch = global_epoch;
        ckpt.best_epoch = global_epoch;
        ckpt.best_metric = best_metric;
        ckpt.rng_state = rng.state();
        return ckpt;
    };

    const auto on_epoch = [&](const EpochRecord& rec) {
        EpochRecord shifted = rec;
        shifted.epoch += epoch_offset;
        const std::string line = history_line(shifted);
        history << line << "\n";
        history.flush();
        std::cout << line << std::endl;
        const double value = metric_value(rec.dev, cfg.train.selection_metric);
        if (value > best_metric) {
            best_metric = value;
            checkpoint_save(out_dir + "/best.ckpt", snapshot(shifted.epoch));
        }
        checkpoint_save(out_dir + "/last.ckpt", snapshot(shifted.epoch));
    };

    auto result = train(params, model_cfg, train_set, dev_set, cfg.train, adam, rng, labels,
                        on_epoch);
    std::cout << "best " << cfg.train.selection_metric << "=" << fmt(result.best_metric)
              << " at epoch " << result.best_epoch + epoch_offset
              << (result.stopped_early ? " (stopped early)" : "") << "\n";
    return 0;
}

struct LoadedCheckpointAny {
    std::string precision;
    CheckpointFile file;
};

LoadedCheckpointAny read_any_checkpoint(const std::string& path, const char* role) {
    if (path.empty())
        throw std::invalid_argument(std::string("paths.") + role + " is required");
    LoadedCheckpointAny out;
    out.file = read_checkpoint_file(path);
    out.precision = checkpoint_precision(out.file);
    return out;
}

template <typename T>
int run_evaluate(const RunConfig& cfg, const CheckpointFile& file) {
    const std::string out_dir = ensure_out_dir(cfg);
    echo_config(cfg, out_dir);
    auto ckpt = from_checkpoint_file<T>(file, cfg.paths.checkpoint);

    const auto docs = load_required(cfg.paths.test, "test");
    const auto examples = to_examples(docs, ckpt.vocab, ckpt.labels, ckpt.config.max_len, true);
    const EvalReport report =
        evaluate_examples(examples, ckpt.params, ckpt.config, cfg.train.threshold, 5, ckpt.labels);

    write_text(out_dir + "/report.txt", report_to_text(report));
    write_text(out_dir + "/report.json", report_to_json_string(report));
    std::cout << "evaluated " << examples.size() << " documents\n"
              << "macro_auc=" << fmt(report.macro_auc) << " micro_auc=" << fmt(report.micro_auc)
              << " macro_f1=" << fmt(report.macro_f1) << " micro_f1=" << fmt(report.micro_f1)
              << " p_at_" << report.k << "=" << fmt(report.precision_at_k) << "\n";
    return 0;
}

template <typename T>
int run_predict(const RunConfig& cfg, const CheckpointFile& file) {
    const std::string out_dir = ensure_out_dir(cfg);
    echo_config(cfg, out_dir);
    auto ckpt = from_checkpoint_file<T>(file, cfg.paths.checkpoint);

    if (cfg.paths.input.empty()) throw std::invalid_argument("paths.input is required");
    const auto docs = load_dataset(cfg.paths.input);
    const int64_t m = ckpt.config.num_labels;
    const int64_t k = std::min<int64_t>(cfg.predict.top_k, m);

    std::ofstream os(out_dir + "/predictions.jsonl", std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open predictions file in " + out_dir);
    RngStream unused(0);
    for (const auto& doc : docs) {
        auto ids = encode(preprocess(doc.text, ckpt.config.max_len), ckpt.vocab);
        if (ids.empty()) ids.push_back(Vocabulary::kUnk);
        Tensor<T> probs = model_forward(ids, ckpt.params, ckpt.config, false, unused);

        std::vector<int64_t> order(static_cast<size_t>(m));
        for (int64_t j = 0; j < m; ++j) order[static_cast<size_t>(j)] = j;
        std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
            const double pa = static_cast<double>(probs.values()[a]);
            const double pb = static_cast<double>(probs.values()[b]);
            if (pa != pb) return pa > pb;
            return a < b;
        });

        json rec;
        rec["id"] = doc.id;
        rec["codes"] = json::array();
        for (int64_t t = 0; t < k; ++t) {
            const int64_t j = order[static_cast<size_t>(t)];
            rec["codes"].push_back(
                {{"code", ckpt.labels[static_cast<size_t>(j)]},
                 {"prob", static_cast<double>(probs.values()[j])}});
        }
        os << rec.dump() << "\n";
    }
    if (!os) throw IoError("failed writing predictions in " + out_dir);
    std::cout << "predicted top-" << k << " codes for " << docs.size() << " documents\n";
    return 0;
}

}  // namespace

int cmd_synth(const RunConfig& cfg) {
    if (cfg.synth.gap >= cfg.max_len)
        throw std::invalid_argument("synth: gap must be smaller than model.max_len");
    const std::string out_dir = ensure_out_dir(cfg);
    echo_config(cfg, out_dir);

    const SynthCorpus corpus = generate_synthetic(cfg.synth);
    save_dataset(out_dir + "/train.jsonl", corpus.train);
    save_dataset(out_dir + "/dev.jsonl", corpus.dev);
    save_dataset(out_dir + "/test.jsonl", corpus.test);
    save_manifest(out_dir + "/manifest.json", corpus.manifest);
    std::cout << "train=" << corpus.train.size() << " dev=" << corpus.dev.size()
              << " test=" << corpus.test.size() << " labels=" << corpus.manifest.rules.size()
              << "\n";
    return 0;
}

int cmd_preprocess(const RunConfig& cfg) {
    const std::string out_dir = ensure_out_dir(cfg);
    echo_config(cfg, out_dir);

    const auto train_docs = load_required(cfg.paths.train, "train");
    std::vector<std::vector<std::string>> token_lists;
    token_lists.reserve(train_docs.size());
    for (const auto& doc : train_docs) token_lists.push_back(preprocess(doc.text, cfg.max_len));
    const Vocabulary vocab = build_vocab(token_lists, cfg.data.min_frequency);
    save_vocab(out_dir + "/vocab.txt", vocab);

    const auto labels = label_space(train_docs);
    std::string label_file;
    for (const auto& l : labels) label_file += l + "\n";
    write_text(out_dir + "/labels.txt", label_file);

    int64_t truncated = 0;
    const auto encode_split = [&](const std::vector<Document>& docs, const std::string& name) {
        std::ofstream os(out_dir + "/" + name + ".tokens.jsonl",
                         std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open token cache for split " + name);
        for (const auto& doc : docs) {
            auto all = preprocess(doc.text, std::numeric_limits<int64_t>::max());
            if (static_cast<int64_t>(all.size()) > cfg.max_len) {
                ++truncated;
                all.resize(static_cast<size_t>(cfg.max_len));
            }
            json rec;
            rec["id"] = doc.id;
            rec["ids"] = encode(all, vocab);
            rec["codes"] = doc.codes;
            os << rec.dump() << "\n";
        }
        if (!os) throw IoError("failed writing token cache for split " + name);
    };
    encode_split(train_docs, "train");
    if (!cfg.paths.dev.empty()) encode_split(load_dataset(cfg.paths.dev), "dev");
    if (!cfg.paths.test.empty()) encode_split(load_dataset(cfg.paths.test), "test");

    std::cout << "vocab_size=" << vocab.size() << " labels=" << labels.size()
              << " truncated_docs=" << truncated << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    return cfg.precision == "f32" ? run_train<float>(cfg) : run_train<double>(cfg);
}

int cmd_evaluate(const RunConfig& cfg) {
    auto any = read_any_checkpoint(cfg.paths.checkpoint, "checkpoint");
    return any.precision == "f32" ? run_evaluate<float>(cfg, any.file)
                                  : run_evaluate<double>(cfg, any.file);
}

int cmd_predict(const RunConfig& cfg) {
    auto any = read_any_checkpoint(cfg.paths.checkpoint, "checkpoint");
    return any.precision == "f32" ? run_predict<float>(cfg, any.file)
                                  : run_predict<double>(cfg, any.file);
}

}  // namespace dcan::cli
