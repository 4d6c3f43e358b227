#include "dcan/config.hpp"

#include <fstream>
#include <set>

#include "dcan/error.hpp"

namespace dcan {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& path) {
    throw std::invalid_argument("config: unknown key '" + path + "'");
}

void check_keys(const json& j, const std::string& prefix, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) bad_key(prefix.empty() ? key : prefix + "." + key);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument("config: key '" + std::string(key) + "' has the wrong type");
    }
}

}  // namespace

std::vector<int64_t> RunConfig::resolved_channels() const {
    if (!channels.empty()) return channels;
    if (num_levels < 1) throw std::invalid_argument("config: model.num_levels must be positive");
    return std::vector<int64_t>(static_cast<size_t>(num_levels), channel_width);
}

ModelConfig RunConfig::make_model_config(int64_t vocab_size, int64_t num_labels) const {
    ModelConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.embed_dim = embed_dim;
    cfg.num_labels = num_labels;
    cfg.kernel_size = kernel_size;
    cfg.channels = resolved_channels();
    cfg.dilations = dilations;
    cfg.projection_dim = projection_dim;
    cfg.dropout_rate = dropout;
    cfg.max_len = max_len;
    if (pooling == "max")
        cfg.pooling = Pooling::Max;
    else if (pooling == "mean")
        cfg.pooling = Pooling::Mean;
    else
        throw std::invalid_argument("config: model.pooling must be 'max' or 'mean'");
    cfg.validate();
    return cfg;
}

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    check_keys(j, "", {"precision", "model", "train", "synth", "data", "paths", "predict"});

    RunConfig cfg;
    read(j, "precision", cfg.precision);
    if (cfg.precision != "f64" && cfg.precision != "f32")
        throw std::invalid_argument("config: precision must be 'f64' or 'f32'");

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model",
                   {"embed_dim", "kernel_size", "num_levels", "channels", "dilations",
                    "projection_dim", "dropout", "max_len", "pooling"});
        read(m, "embed_dim", cfg.embed_dim);
        read(m, "kernel_size", cfg.kernel_size);
        read(m, "num_levels", cfg.num_levels);
        if (m.contains("channels")) {
            if (m.at("channels").is_array()) {
                cfg.channels = m.at("channels").get<std::vector<int64_t>>();
                if (m.contains("num_levels") &&
                    cfg.num_levels != static_cast<int64_t>(cfg.channels.size()))
                    throw std::invalid_argument(
                        "config: model.num_levels disagrees with model.channels length");
                cfg.num_levels = static_cast<int64_t>(cfg.channels.size());
            } else {
                read(m, "channels", cfg.channel_width);
            }
        }
        read(m, "dilations", cfg.dilations);
        read(m, "projection_dim", cfg.projection_dim);
        read(m, "dropout", cfg.dropout);
        read(m, "max_len", cfg.max_len);
        read(m, "pooling", cfg.pooling);
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t, "train",
                   {"epochs", "batch_size", "lr", "smoothing", "patience", "seed",
                    "selection_metric", "threshold"});
        read(t, "epochs", cfg.train.epochs);
        read(t, "batch_size", cfg.train.batch_size);
        read(t, "lr", cfg.train.lr);
        read(t, "smoothing", cfg.train.smoothing);
        read(t, "patience", cfg.train.patience);
        read(t, "seed", cfg.train.seed);
        read(t, "selection_metric", cfg.train.selection_metric);
        read(t, "threshold", cfg.train.threshold);
    }

    if (j.contains("synth")) {
        const json& s = j.at("synth");
        check_keys(s, "synth",
                   {"num_labels", "train_docs", "dev_docs", "test_docs", "filler_vocab",
                    "triggers_per_label", "long_range_fraction", "gap", "len_min", "len_max",
                    "seed"});
        read(s, "num_labels", cfg.synth.num_labels);
        read(s, "train_docs", cfg.synth.train_docs);
        read(s, "dev_docs", cfg.synth.dev_docs);
        read(s, "test_docs", cfg.synth.test_docs);
        read(s, "filler_vocab", cfg.synth.filler_vocab);
        read(s, "triggers_per_label", cfg.synth.triggers_per_label);
        read(s, "long_range_fraction", cfg.synth.long_range_fraction);
        read(s, "gap", cfg.synth.gap);
        read(s, "len_min", cfg.synth.len_min);
        read(s, "len_max", cfg.synth.len_max);
        read(s, "seed", cfg.synth.seed);
    }

    if (j.contains("data")) {
        check_keys(j.at("data"), "data", {"min_frequency"});
        read(j.at("data"), "min_frequency", cfg.data.min_frequency);
    }

    if (j.contains("paths")) {
        const json& p = j.at("paths");
        check_keys(p, "paths",
                   {"train", "dev", "test", "vocab", "checkpoint", "resume", "input", "out"});
        read(p, "train", cfg.paths.train);
        read(p, "dev", cfg.paths.dev);
        read(p, "test", cfg.paths.test);
        read(p, "vocab", cfg.paths.vocab);
        read(p, "checkpoint", cfg.paths.checkpoint);
        read(p, "resume", cfg.paths.resume);
        read(p, "input", cfg.paths.input);
        read(p, "out", cfg.paths.out);
    }

    if (j.contains("predict")) {
        check_keys(j.at("predict"), "predict", {"top_k"});
        read(j.at("predict"), "top_k", cfg.predict.top_k);
        if (cfg.predict.top_k < 1)
            throw std::invalid_argument("config: predict.top_k must be positive");
    }

    cfg.train.validate();
    return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["precision"] = cfg.precision;
    j["model"] = {{"embed_dim", cfg.embed_dim},
                  {"kernel_size", cfg.kernel_size},
                  {"num_levels", cfg.num_levels},
                  {"channels", cfg.resolved_channels()},
                  {"dilations", cfg.dilations},
                  {"projection_dim", cfg.projection_dim},
                  {"dropout", cfg.dropout},
                  {"max_len", cfg.max_len},
                  {"pooling", cfg.pooling}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.lr},
                  {"smoothing", cfg.train.smoothing},
                  {"patience", cfg.train.patience},
                  {"seed", cfg.train.seed},
                  {"selection_metric", cfg.train.selection_metric},
                  {"threshold", cfg.train.threshold}};
    j["synth"] = {{"num_labels", cfg.synth.num_labels},
                  {"train_docs", cfg.synth.train_docs},
                  {"dev_docs", cfg.synth.dev_docs},
                  {"test_docs", cfg.synth.test_docs},
                  {"filler_vocab", cfg.synth.filler_vocab},
                  {"triggers_per_label", cfg.synth.triggers_per_label},
                  {"long_range_fraction", cfg.synth.long_range_fraction},
                  {"gap", cfg.synth.gap},
                  {"len_min", cfg.synth.len_min},
                  {"len_max", cfg.synth.len_max},
                  {"seed", cfg.synth.seed}};
    j["data"] = {{"min_frequency", cfg.data.min_frequency}};
    j["paths"] = {{"train", cfg.paths.train},     {"dev", cfg.paths.dev},
                  {"test", cfg.paths.test},       {"vocab", cfg.paths.vocab},
                  {"checkpoint", cfg.paths.checkpoint}, {"resume", cfg.paths.resume},
                  {"input", cfg.paths.input},     {"out", cfg.paths.out}};
    j["predict"] = {{"top_k", cfg.predict.top_k}};
    return j;
}

void apply_override(json& j, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override '" + assignment + "' is not of the form key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // plain string

    json* node = &j;
    size_t start = 0;
    for (;;) {
        const size_t dot = path.find('.', start);
        const std::string part = path.substr(start, dot - start);
        if (part.empty())
            throw std::invalid_argument("override '" + assignment + "' has an empty key segment");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!config_path.empty()) {
        std::ifstream is(config_path, std::ios::binary);
        if (!is) throw IoError("cannot open config file: " + config_path);
        j = json::parse(is, nullptr, false);
        if (j.is_discarded()) throw ParseError(config_path + ": invalid JSON");
    }
    for (const auto& o : overrides) apply_override(j, o);
    return run_config_from_json(j);
}

json model_config_to_json(const ModelConfig& cfg) {
    return {{"vocab_size", cfg.vocab_size},
            {"embed_dim", cfg.embed_dim},
            {"num_labels", cfg.num_labels},
            {"kernel_size", cfg.kernel_size},
            {"channels", cfg.channels},
            {"dilations", cfg.dilations},
            {"projection_dim", cfg.projection_dim},
            {"dropout", cfg.dropout_rate},
            {"max_len", cfg.max_len},
            {"pooling", to_string(cfg.pooling)}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    try {
        cfg.vocab_size = j.at("vocab_size").get<int64_t>();
        cfg.embed_dim = j.at("embed_dim").get<int64_t>();
        cfg.num_labels = j.at("num_labels").get<int64_t>();
        cfg.kernel_size = j.at("kernel_size").get<int64_t>();
        cfg.channels = j.at("channels").get<std::vector<int64_t>>();
        cfg.dilations = j.at("dilations").get<std::vector<int64_t>>();
        cfg.projection_dim = j.at("projection_dim").get<int64_t>();
        cfg.dropout_rate = j.at("dropout").get<double>();
        cfg.max_len = j.at("max_len").get<int64_t>();
        const std::string pooling = j.at("pooling").get<std::string>();
        cfg.pooling = pooling == "mean" ? Pooling::Mean : Pooling::Max;
    } catch (const json::exception& e) {
        throw ParseError(std::string("model config block: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace dcan
