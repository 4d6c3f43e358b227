#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcan/data.hpp"
#include "dcan/model.hpp"
#include "dcan/train.hpp"

namespace dcan {

struct PathsConfig {
    std::string train, dev, test;  // dataset files
    std::string vocab;             // optional prebuilt vocabulary
    std::string checkpoint;        // model to load (evaluate/predict)
    std::string resume;            // checkpoint to continue training from
    std::string input;             // prediction input
    std::string out = "out";      // output directory
};

struct DataConfig {
    int64_t min_frequency = 1;
};

struct PredictConfig {
    int64_t top_k = 5;
};

// Everything an operator can set: one structured file, overridable from the
// command line with --set key=value. Unknown keys are rejected.
struct RunConfig {
    std::string precision = "f64";  // or "f32"

    // model section; vocab_size and num_labels come from the data at train
    // time, channels may be one uniform width or an explicit per-level list
    int64_t embed_dim = 100;
    int64_t kernel_size = 3;
    int64_t num_levels = 7;
    int64_t channel_width = 32;
    std::vector<int64_t> channels;   // empty -> channel_width repeated num_levels times
    std::vector<int64_t> dilations;  // empty -> 2^i
    int64_t projection_dim = 50;
    double dropout = 0.2;
    int64_t max_len = 2500;
    std::string pooling = "max";

    TrainConfig train;
    SynthSpec synth;
    DataConfig data;
    PathsConfig paths;
    PredictConfig predict;

    std::vector<int64_t> resolved_channels() const;
    ModelConfig make_model_config(int64_t vocab_size, int64_t num_labels) const;
};

// Defaults + file + overrides, validated; every key is checked against the
// schema and out-of-range values are rejected here.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides);

// "a.b.c=value" applied onto the JSON tree; value parses as JSON when it can,
// string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace dcan
