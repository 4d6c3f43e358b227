#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcan/ops.hpp"
#include "dcan/rng.hpp"
#include "dcan/tensor.hpp"

namespace dcan {

enum class Activation { Relu };
enum class Pooling { Max, Mean };

inline std::string to_string(Pooling p) { return p == Pooling::Max ? "max" : "mean"; }

// Hyperparameters of the dilated convolutional attention network. The two
// roles the literature's k plays are split: kernel_size is the convolution
// width, projection_dim the classifier width.
struct ModelConfig {
    int64_t vocab_size = 0;   // includes PAD=0 and UNK=1
    int64_t embed_dim = 100;
    int64_t num_labels = 0;
    int64_t kernel_size = 3;
    std::vector<int64_t> channels;   // per level; size == num_levels
    std::vector<int64_t> dilations;  // per level; defaults to 2^i
    int64_t projection_dim = 50;
    double dropout_rate = 0.2;
    int64_t max_len = 2500;
    Activation activation = Activation::Relu;
    Pooling pooling = Pooling::Max;

    int64_t num_levels() const { return static_cast<int64_t>(channels.size()); }

    void validate() const {
        if (vocab_size < 2) throw std::invalid_argument("model: vocab_size must be >= 2");
        if (embed_dim < 1) throw std::invalid_argument("model: embed_dim must be positive");
        if (num_labels < 1) throw std::invalid_argument("model: num_labels must be positive");
        if (kernel_size < 1) throw std::invalid_argument("model: kernel_size must be positive");
        if (channels.empty()) throw std::invalid_argument("model: at least one level required");
        for (int64_t h : channels)
            if (h < 1) throw std::invalid_argument("model: channel counts must be positive");
        if (!dilations.empty() && dilations.size() != channels.size())
            throw std::invalid_argument("model: dilation list must match level count");
        for (int64_t d : dilations)
            if (d < 1) throw std::invalid_argument("model: dilations must be positive");
        if (projection_dim < 1)
            throw std::invalid_argument("model: projection_dim must be positive");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("model: dropout_rate must lie in [0, 1)");
        if (max_len < 1) throw std::invalid_argument("model: max_len must be positive");
    }

    int64_t dilation_at(int64_t level) const {
        if (!dilations.empty()) return dilations[static_cast<size_t>(level)];
        return int64_t(1) << level;
    }

    bool operator==(const ModelConfig&) const = default;
};

// Span of input positions able to influence one output position: two
// convolutions per block, each reaching (kernel_size-1)*dilation backwards.
inline int64_t receptive_field(const ModelConfig& cfg) {
    int64_t reach = 0;
    for (int64_t l = 0; l < cfg.num_levels(); ++l)
        reach += 2 * (cfg.kernel_size - 1) * cfg.dilation_at(l);
    return 1 + reach;
}

template <typename T>
struct LevelParams {
    Tensor<T> conv1_v, conv1_g;
    Tensor<T> conv2_v, conv2_g;
    std::optional<Tensor<T>> proj;  // 1x1 identity-path projection when channels change
};

template <typename T>
struct ModelParams {
    Tensor<T> embedding;             // vocab x d_e, row 0 (PAD) frozen zero
    std::vector<LevelParams<T>> levels;
    Tensor<T> attention_u;           // h_L x m
    Tensor<T> classifier_w;          // p x h_L
    Tensor<T> classifier_b;          // 1 x p

    // Stable name -> tensor listing; ordering drives Adam state, checkpoints
    // and the parameter-count report.
    std::vector<std::pair<std::string, Tensor<T>>> named() const {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        out.emplace_back("embedding", embedding);
        for (size_t l = 0; l < levels.size(); ++l) {
            const std::string p = "level" + std::to_string(l) + ".";
            out.emplace_back(p + "conv1.v", levels[l].conv1_v);
            out.emplace_back(p + "conv1.g", levels[l].conv1_g);
            out.emplace_back(p + "conv2.v", levels[l].conv2_v);
            out.emplace_back(p + "conv2.g", levels[l].conv2_g);
            if (levels[l].proj) out.emplace_back(p + "proj", *levels[l].proj);
        }
        out.emplace_back("attention.u", attention_u);
        out.emplace_back("classifier.w", classifier_w);
        out.emplace_back("classifier.b", classifier_b);
        return out;
    }

    void zero_grads() {
        for (auto& [name, t] : named()) {
            Tensor<T> tt = t;
            tt.zero_grad();
        }
    }

    int64_t total_parameters() const {
        int64_t n = 0;
        for (const auto& [name, t] : named()) n += t.numel();
        return n;
    }
};

namespace detail {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, RngStream& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = T(rng.uniform(-bound, bound));
    t.set_requires_grad(true);
    return t;
}

template <typename T>
Tensor<T> channel_norms(const Tensor<T>& v) {
    const int64_t channels = v.dim(0);
    const int64_t slab = v.numel() / channels;
    Tensor<T> g({channels});
    auto vv = v.values();
    for (int64_t o = 0; o < channels; ++o) {
        T acc = T(0);
        for (int64_t i = 0; i < slab; ++i) acc += vv[o * slab + i] * vv[o * slab + i];
        g.values()[o] = std::sqrt(acc);
    }
    g.set_requires_grad(true);
    return g;
}

}  // namespace detail

// Uniform fan-in-scaled initialization; the weight-norm gain starts at the
// initial filter norm so w == v at step 0. The PAD embedding row stays zero.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, RngStream& rng) {
    cfg.validate();
    ModelParams<T> params;

    params.embedding = detail::uniform_tensor<T>({cfg.vocab_size, cfg.embed_dim},
                                                 1.0 / std::sqrt(double(cfg.embed_dim)), rng);
    for (int64_t j = 0; j < cfg.embed_dim; ++j) params.embedding.values()[j] = T(0);

    int64_t c_in = cfg.embed_dim;
    for (int64_t l = 0; l < cfg.num_levels(); ++l) {
        const int64_t c_out = cfg.channels[static_cast<size_t>(l)];
        LevelParams<T> level;
        const double bound1 = 1.0 / std::sqrt(double(c_in * cfg.kernel_size));
        const double bound2 = 1.0 / std::sqrt(double(c_out * cfg.kernel_size));
        level.conv1_v = detail::uniform_tensor<T>({c_out, c_in, cfg.kernel_size}, bound1, rng);
        level.conv1_g = detail::channel_norms(level.conv1_v);
        level.conv2_v = detail::uniform_tensor<T>({c_out, c_out, cfg.kernel_size}, bound2, rng);
        level.conv2_g = detail::channel_norms(level.conv2_v);
        if (c_in != c_out)
            level.proj = detail::uniform_tensor<T>({c_out, c_in, 1},
                                                   1.0 / std::sqrt(double(c_in)), rng);
        params.levels.push_back(std::move(level));
        c_in = c_out;
    }

    const int64_t h_last = cfg.channels.back();
    params.attention_u =
        detail::uniform_tensor<T>({h_last, cfg.num_labels}, 1.0 / std::sqrt(double(h_last)), rng);
    params.classifier_w = detail::uniform_tensor<T>({cfg.projection_dim, h_last},
                                                    1.0 / std::sqrt(double(h_last)), rng);
    params.classifier_b = Tensor<T>({int64_t(1), cfg.projection_dim});
    params.classifier_b.set_requires_grad(true);
    return params;
}

template <typename T>
Tensor<T> activation_fn(const ModelConfig& cfg, const Tensor<T>& x) {
    (void)cfg;  // single activation today; the enum keeps the config stable
    return relu(x);
}

// Token embedding rows for the first n_valid ids (whole sequence when
// n_valid < 0). Trailing PAD ids beyond n_valid never enter the network.
template <typename T>
Tensor<T> embed(const std::vector<int32_t>& token_ids, const ModelParams<T>& params,
                int64_t n_valid = -1) {
    std::vector<int32_t> ids = token_ids;
    if (n_valid >= 0) {
        if (n_valid > static_cast<int64_t>(ids.size()))
            throw std::invalid_argument("embed: n_valid exceeds sequence length");
        ids.resize(static_cast<size_t>(n_valid));
    }
    return embedding_lookup(ids, params.embedding, /*pad_id=*/0);
}

// One residual block: two weight-normalized dilated convolutions, each
// followed by activation and dropout, added to the (possibly projected)
// identity path, then activated: out = sigma(H + G(H)).
template <typename T>
Tensor<T> residual_block_forward(const Tensor<T>& h, int64_t level, const ModelParams<T>& params,
                                 const ModelConfig& cfg, bool training, RngStream& rng) {
    if (level < 0 || level >= cfg.num_levels())
        throw std::invalid_argument("residual_block_forward: level out of range");
    const LevelParams<T>& lp = params.levels[static_cast<size_t>(level)];
    const int64_t d = cfg.dilation_at(level);

    Tensor<T> w1 = weight_norm(lp.conv1_v, lp.conv1_g);
    Tensor<T> z1 = dropout(activation_fn(cfg, conv1d_dilated(h, w1, d)), cfg.dropout_rate,
                           training, rng);
    Tensor<T> w2 = weight_norm(lp.conv2_v, lp.conv2_g);
    Tensor<T> z2 = dropout(activation_fn(cfg, conv1d_dilated(z1, w2, d)), cfg.dropout_rate,
                           training, rng);

    Tensor<T> skip = lp.proj ? conv1d_dilated(h, *lp.proj, 1) : h;
    return activation_fn(cfg, add(skip, z2));
}

// Label attention: A = softmax(H U) over positions per label column,
// V = A^T H. Every column of A sums to 1; each row of V is a convex
// combination of the rows of H.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> label_attention(const Tensor<T>& h, const Tensor<T>& u) {
    if (h.rank() != 2 || u.rank() != 2)
        throw ShapeError("label_attention: rank-2 inputs required");
    if (h.dim(0) < 1) throw std::invalid_argument("label_attention: empty sequence");
    Tensor<T> scores = matmul(h, u);              // n x m
    Tensor<T> a = softmax(scores, /*axis=*/0);    // columns sum to 1
    Tensor<T> v = matmul_tn(a, h);                // m x h
    return {a, v};
}

// Classification head: Y = V W^T + b (m x p), pooled over the projection
// axis, squashed by the sigmoid.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> classify_pool(const Tensor<T>& v, const Tensor<T>& w,
                                              const Tensor<T>& b, Pooling pooling) {
    Tensor<T> y = add_rowwise(matmul_nt(v, w), b);  // m x p
    Tensor<T> logits = pooling == Pooling::Max ? rowwise_max(y) : rowwise_mean(y);
    return {logits, sigmoid(logits)};
}

template <typename T>
struct ForwardResult {
    Tensor<T> features;   // H^L, n x h_L
    Tensor<T> attention;  // A, n x m
    Tensor<T> attentive;  // V, m x h_L
    Tensor<T> logits;     // m
    Tensor<T> probs;      // m
};

// Full pipeline: embed -> L residual blocks -> label attention -> pooled
// classifier. n_valid (from the batch padding mask) marks the count of real
// leading tokens; trailing PAD positions are excluded so appended padding
// cannot change the output.
template <typename T>
ForwardResult<T> model_forward_full(const std::vector<int32_t>& token_ids,
                                    const ModelParams<T>& params, const ModelConfig& cfg,
                                    bool training, RngStream& rng, int64_t n_valid = -1) {
    if (token_ids.empty()) throw std::invalid_argument("model_forward: empty token sequence");
    if (static_cast<int64_t>(token_ids.size()) > cfg.max_len &&
        (n_valid < 0 || n_valid > cfg.max_len))
        throw std::invalid_argument("model_forward: sequence exceeds max_len");

    Tensor<T> h = embed(token_ids, params, n_valid);
    for (int64_t l = 0; l < cfg.num_levels(); ++l)
        h = residual_block_forward(h, l, params, cfg, training, rng);

    ForwardResult<T> res;
    res.features = h;
    auto [a, v] = label_attention(h, params.attention_u);
    res.attention = a;
    res.attentive = v;
    auto [logits, probs] = classify_pool(v, params.classifier_w, params.classifier_b, cfg.pooling);
    res.logits = logits;
    res.probs = probs;
    return res;
}

template <typename T>
Tensor<T> model_forward(const std::vector<int32_t>& token_ids, const ModelParams<T>& params,
                        const ModelConfig& cfg, bool training, RngStream& rng,
                        int64_t n_valid = -1) {
    return model_forward_full(token_ids, params, cfg, training, rng, n_valid).probs;
}

// Trainable-parameter counts per component (embedding, each block, attention,
// classifier) for the efficiency report.
template <typename T>
std::vector<std::pair<std::string, int64_t>> parameter_counts(const ModelParams<T>& params) {
    std::vector<std::pair<std::string, int64_t>> out;
    out.emplace_back("embedding", params.embedding.numel());
    for (size_t l = 0; l < params.levels.size(); ++l) {
        const auto& lp = params.levels[l];
        int64_t n = lp.conv1_v.numel() + lp.conv1_g.numel() + lp.conv2_v.numel() +
                    lp.conv2_g.numel() + (lp.proj ? lp.proj->numel() : 0);
        out.emplace_back("block" + std::to_string(l), n);
    }
    out.emplace_back("label_attention", params.attention_u.numel());
    out.emplace_back("classifier", params.classifier_w.numel() + params.classifier_b.numel());
    int64_t total = 0;
    for (const auto& [k, n] : out) total += n;
    out.emplace_back("total", total);
    return out;
}

}  // namespace dcan
