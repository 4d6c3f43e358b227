#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "dcan/checkpoint_io.hpp"
#include "dcan/config.hpp"
#include "dcan/model.hpp"
#include "dcan/textpipe.hpp"
#include "dcan/train.hpp"

namespace dcan {

namespace detail {

template <typename T>
constexpr uint8_t dtype_code() {
    static_assert(std::is_same_v<T, double> || std::is_same_v<T, float>);
    return std::is_same_v<T, double> ? 0 : 1;
}

template <typename T>
inline const char* precision_name() {
    return std::is_same_v<T, double> ? "f64" : "f32";
}

template <typename T>
std::vector<uint8_t> scalars_to_le(std::span<const T> values) {
    using Bits = std::conditional_t<std::is_same_v<T, double>, uint64_t, uint32_t>;
    std::vector<uint8_t> out;
    out.reserve(values.size() * sizeof(T));
    for (T v : values) {
        const Bits bits = std::bit_cast<Bits>(v);
        for (size_t i = 0; i < sizeof(T); ++i)
            out.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
    }
    return out;
}

template <typename T>
std::vector<T> scalars_from_le(const std::vector<uint8_t>& bytes, const std::string& name) {
    using Bits = std::conditional_t<std::is_same_v<T, double>, uint64_t, uint32_t>;
    if (bytes.size() % sizeof(T) != 0)
        throw ParseError("tensor '" + name + "' payload is not a multiple of the scalar size");
    std::vector<T> out(bytes.size() / sizeof(T));
    for (size_t i = 0; i < out.size(); ++i) {
        Bits bits = 0;
        for (size_t b = 0; b < sizeof(T); ++b)
            bits |= Bits(bytes[i * sizeof(T) + b]) << (8 * b);
        out[i] = std::bit_cast<T>(bits);
    }
    return out;
}

template <typename T>
TensorRecord tensor_to_record(const std::string& name, const Tensor<T>& t) {
    TensorRecord rec;
    rec.name = name;
    rec.dtype = dtype_code<T>();
    rec.dims = t.shape();
    rec.payload = scalars_to_le<T>(t.values());
    return rec;
}

inline std::string u64_hex(uint64_t v) {
    char buf[17];
    for (int i = 15; i >= 0; --i) {
        buf[i] = "0123456789abcdef"[v & 0xf];
        v >>= 4;
    }
    buf[16] = '\0';
    return buf;
}

inline uint64_t u64_from_hex(const std::string& s) {
    uint64_t v = 0;
    for (char c : s) {
        v <<= 4;
        if (c >= '0' && c <= '9')
            v |= static_cast<uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f')
            v |= static_cast<uint64_t>(c - 'a' + 10);
        else
            throw ParseError("invalid hex digit in RNG state");
    }
    return v;
}

// Zero-valued parameter set with the shapes the config dictates; the loader
// fills it from the named tensor blocks.
template <typename T>
ModelParams<T> empty_params(const ModelConfig& cfg) {
    ModelParams<T> params;
    params.embedding = Tensor<T>({cfg.vocab_size, cfg.embed_dim});
    int64_t c_in = cfg.embed_dim;
    for (int64_t l = 0; l < cfg.num_levels(); ++l) {
        const int64_t c_out = cfg.channels[static_cast<size_t>(l)];
        LevelParams<T> level;
        level.conv1_v = Tensor<T>({c_out, c_in, cfg.kernel_size});
        level.conv1_g = Tensor<T>({c_out});
        level.conv2_v = Tensor<T>({c_out, c_out, cfg.kernel_size});
        level.conv2_g = Tensor<T>({c_out});
        if (c_in != c_out) level.proj = Tensor<T>({c_out, c_in, int64_t(1)});
        params.levels.push_back(std::move(level));
        c_in = c_out;
    }
    const int64_t h_last = cfg.channels.back();
    params.attention_u = Tensor<T>({h_last, cfg.num_labels});
    params.classifier_w = Tensor<T>({cfg.projection_dim, h_last});
    params.classifier_b = Tensor<T>({int64_t(1), cfg.projection_dim});
    for (auto& [name, t] : params.named()) {
        Tensor<T> tt = t;
        tt.set_requires_grad(true);
    }
    return params;
}

}  // namespace detail

// Everything needed to resume training or run inference.
template <typename T>
struct TrainerCheckpoint {
    ModelConfig config;
    std::vector<std::string> labels;
    Vocabulary vocab;
    ModelParams<T> params;
    AdamState<T> adam;
    int64_t epoch = 0;
    int64_t best_epoch = 0;
    double best_metric = 0.0;
    std::array<uint64_t, 4> rng_state{};
};

template <typename T>
CheckpointFile to_checkpoint_file(const TrainerCheckpoint<T>& ckpt) {
    CheckpointFile file;
    nlohmann::json meta;
    meta["precision"] = detail::precision_name<T>();
    meta["model"] = model_config_to_json(ckpt.config);
    meta["labels"] = ckpt.labels;
    nlohmann::json vocab = nlohmann::json::array();
    for (int64_t id = 2; id < ckpt.vocab.size(); ++id)
        vocab.push_back(ckpt.vocab.id_to_token[static_cast<size_t>(id)]);
    meta["vocab"] = std::move(vocab);
    meta["vocab_min_frequency"] = ckpt.vocab.min_frequency;
    meta["train_state"] = {{"step", ckpt.adam.step},
                           {"epoch", ckpt.epoch},
                           {"best_epoch", ckpt.best_epoch},
                           {"best_metric", ckpt.best_metric},
                           {"lr", ckpt.adam.lr},
                           {"beta1", ckpt.adam.beta1},
                           {"beta2", ckpt.adam.beta2},
                           {"eps", ckpt.adam.eps},
                           {"rng",
                            {detail::u64_hex(ckpt.rng_state[0]), detail::u64_hex(ckpt.rng_state[1]),
                             detail::u64_hex(ckpt.rng_state[2]),
                             detail::u64_hex(ckpt.rng_state[3])}}};
    file.meta = std::move(meta);

    const auto named = ckpt.params.named();
    for (const auto& [name, t] : named)
        file.tensors.push_back(detail::tensor_to_record(name, t));
    for (size_t i = 0; i < named.size(); ++i) {
        const auto& shape = named[i].second.shape();
        TensorRecord m1, m2;
        m1.name = "adam." + named[i].first + ".m1";
        m2.name = "adam." + named[i].first + ".m2";
        m1.dtype = m2.dtype = detail::dtype_code<T>();
        m1.dims = m2.dims = shape;
        m1.payload = detail::scalars_to_le<T>(std::span<const T>(ckpt.adam.mom1[i]));
        m2.payload = detail::scalars_to_le<T>(std::span<const T>(ckpt.adam.mom2[i]));
        file.tensors.push_back(std::move(m1));
        file.tensors.push_back(std::move(m2));
    }
    return file;
}

template <typename T>
void checkpoint_save(const std::string& path, const TrainerCheckpoint<T>& ckpt) {
    write_checkpoint_file(path, to_checkpoint_file(ckpt));
}

inline std::string checkpoint_precision(const CheckpointFile& file) {
    if (!file.meta.contains("precision") || !file.meta.at("precision").is_string())
        throw ParseError("checkpoint metadata lacks a precision field");
    return file.meta.at("precision").get<std::string>();
}

template <typename T>
TrainerCheckpoint<T> from_checkpoint_file(const CheckpointFile& file, const std::string& origin) {
    TrainerCheckpoint<T> ckpt;
    const std::string precision = checkpoint_precision(file);
    if (precision != detail::precision_name<T>())
        throw ParseError(origin + ": checkpoint precision is " + precision + ", expected " +
                         detail::precision_name<T>());
    try {
        ckpt.config = model_config_from_json(file.meta.at("model"));
        ckpt.labels = file.meta.at("labels").get<std::vector<std::string>>();
        for (const auto& token : file.meta.at("vocab"))
            ckpt.vocab.add_token(token.get<std::string>());
        if (file.meta.contains("vocab_min_frequency"))
            ckpt.vocab.min_frequency = file.meta.at("vocab_min_frequency").get<int64_t>();
        const auto& ts = file.meta.at("train_state");
        ckpt.adam.step = ts.at("step").get<int64_t>();
        ckpt.epoch = ts.at("epoch").get<int64_t>();
        ckpt.best_epoch = ts.at("best_epoch").get<int64_t>();
        ckpt.best_metric = ts.at("best_metric").get<double>();
        ckpt.adam.lr = ts.at("lr").get<double>();
        ckpt.adam.beta1 = ts.at("beta1").get<double>();
        ckpt.adam.beta2 = ts.at("beta2").get<double>();
        ckpt.adam.eps = ts.at("eps").get<double>();
        const auto rng = ts.at("rng").get<std::vector<std::string>>();
        if (rng.size() != 4) throw ParseError(origin + ": RNG state must hold 4 words");
        for (size_t i = 0; i < 4; ++i) ckpt.rng_state[i] = detail::u64_from_hex(rng[i]);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": metadata field error: " + e.what());
    }
    if (static_cast<int64_t>(ckpt.labels.size()) != ckpt.config.num_labels)
        throw ParseError(origin + ": label list disagrees with model num_labels");
    if (ckpt.vocab.size() != ckpt.config.vocab_size)
        throw ParseError(origin + ": vocabulary size disagrees with model vocab_size");

    ckpt.params = detail::empty_params<T>(ckpt.config);
    auto named = ckpt.params.named();
    ckpt.adam.mom1.resize(named.size());
    ckpt.adam.mom2.resize(named.size());

    std::unordered_map<std::string, const TensorRecord*> by_name;
    for (const auto& rec : file.tensors) by_name.emplace(rec.name, &rec);
    const auto fetch = [&](const std::string& name, const Shape& want) -> std::vector<T> {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ParseError(origin + ": missing tensor '" + name + "'");
        const TensorRecord& rec = *it->second;
        if (rec.dtype != detail::dtype_code<T>())
            throw ParseError(origin + ": tensor '" + name + "' has the wrong dtype");
        if (rec.dims != want)
            throw ParseError(origin + ": tensor '" + name + "' shape " + shape_str(rec.dims) +
                             " does not match the config's " + shape_str(want));
        return detail::scalars_from_le<T>(rec.payload, name);
    };
    for (size_t i = 0; i < named.size(); ++i) {
        auto& [name, tensor] = named[i];
        const std::vector<T> values = fetch(name, tensor.shape());
        std::copy(values.begin(), values.end(), tensor.values().begin());
        ckpt.adam.mom1[i] = fetch("adam." + name + ".m1", tensor.shape());
        ckpt.adam.mom2[i] = fetch("adam." + name + ".m2", tensor.shape());
    }
    if (by_name.size() != named.size() * 3)
        throw ParseError(origin + ": unexpected extra tensor blocks");
    return ckpt;
}

template <typename T>
TrainerCheckpoint<T> checkpoint_load(const std::string& path) {
    return from_checkpoint_file<T>(read_checkpoint_file(path), path);
}

}  // namespace dcan
