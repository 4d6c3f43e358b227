#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dcan/data.hpp"
#include "dcan/metrics.hpp"
#include "dcan/model.hpp"
#include "dcan/ops.hpp"
#include "dcan/rng.hpp"

namespace dcan {

// Label smoothing: y_i * (1 - alpha) + alpha / m.
template <typename T>
std::vector<T> smooth_labels(const std::vector<uint8_t>& y, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("smooth_labels: alpha must lie in [0, 1]");
    const double m = double(y.size());
    std::vector<T> out(y.size());
    for (size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 0 && y[i] != 1)
            throw std::invalid_argument("smooth_labels: targets must be 0 or 1");
        out[i] = T(double(y[i]) * (1.0 - alpha) + alpha / m);
    }
    return out;
}

// Sum over labels of -y log p - (1-y) log(1-p). Diagnostic form over
// probabilities strictly inside (0,1); the training path evaluates the same
// loss from logits (bce_with_logits) so saturation can never reach log(0).
inline double bce_loss(const std::vector<double>& y_target, const std::vector<double>& y_hat) {
    if (y_target.size() != y_hat.size())
        throw std::invalid_argument("bce_loss: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < y_hat.size(); ++i) {
        const double p = y_hat[i];
        if (!(p > 0.0 && p < 1.0))
            throw std::invalid_argument("bce_loss: predictions must lie strictly in (0, 1)");
        acc += -y_target[i] * std::log(p) - (1.0 - y_target[i]) * std::log1p(-p);
    }
    return acc;
}

template <typename T>
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step = 0;
    std::vector<std::vector<T>> mom1, mom2;  // parallel to the named parameter order

    template <typename Params>
    static AdamState fresh(const Params& params, double lr) {
        AdamState s;
        s.lr = lr;
        for (const auto& [name, t] : params.named()) {
            s.mom1.emplace_back(static_cast<size_t>(t.numel()), T(0));
            s.mom2.emplace_back(static_cast<size_t>(t.numel()), T(0));
        }
        return s;
    }
};

// Bias-corrected Adam over the stable named-parameter ordering. A parameter
// whose gradient is zero (or never allocated) does not move.
template <typename T>
void adam_step(ModelParams<T>& params, AdamState<T>& state) {
    auto named = params.named();
    if (named.size() != state.mom1.size() || named.size() != state.mom2.size())
        throw ContractViolation("adam_step: moment buffers do not match parameter list");
    state.step += 1;
    const T c1 = T(1.0 - std::pow(state.beta1, double(state.step)));
    const T c2 = T(1.0 - std::pow(state.beta2, double(state.step)));
    const T b1 = T(state.beta1), b2 = T(state.beta2);
    const T lr = T(state.lr), eps = T(state.eps);
    for (size_t pi = 0; pi < named.size(); ++pi) {
        Tensor<T> t = named[pi].second;
        auto& m1 = state.mom1[pi];
        auto& m2 = state.mom2[pi];
        if (static_cast<int64_t>(m1.size()) != t.numel())
            throw ContractViolation("adam_step: moment shape mismatch for " + named[pi].first);
        if (!t.has_grad()) continue;
        auto g = t.grad();
        auto v = t.values();
        for (size_t i = 0; i < m1.size(); ++i) {
            m1[i] = b1 * m1[i] + (T(1) - b1) * g[i];
            m2[i] = b2 * m2[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m1[i] / c1;
            const T vhat = m2[i] / c2;
            v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

struct TrainConfig {
    int64_t epochs = 30;
    int64_t batch_size = 16;
    double lr = 1e-3;
    double smoothing = 0.1;
    int64_t patience = 5;
    uint64_t seed = 12345;
    std::string selection_metric = "micro_f1";
    double threshold = 0.5;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train: epochs must be positive");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
        if (lr < 0.0) throw std::invalid_argument("train: lr must be non-negative");
        if (smoothing < 0.0 || smoothing > 1.0)
            throw std::invalid_argument("train: smoothing must lie in [0, 1]");
        if (patience < 0) throw std::invalid_argument("train: patience must be non-negative");
        if (threshold <= 0.0 || threshold >= 1.0)
            throw std::invalid_argument("train: threshold must lie in (0, 1)");
        metric_index(selection_metric);
    }

    static int metric_index(const std::string& name) {
        const char* names[] = {"macro_auc", "micro_auc", "macro_f1", "micro_f1",
                               "precision_at_k"};
        for (int i = 0; i < 5; ++i)
            if (name == names[i]) return i;
        throw std::invalid_argument("unknown selection metric '" + name + "'");
    }
};

inline double metric_value(const EvalReport& report, const std::string& name) {
    switch (TrainConfig::metric_index(name)) {
        case 0: return report.macro_auc.value_or(-1.0);
        case 1: return report.micro_auc.value_or(-1.0);
        case 2: return report.macro_f1;
        case 3: return report.micro_f1;
        default: return report.precision_at_k;
    }
}

struct EpochRecord {
    int64_t epoch = 0;   // 1-based
    double train_loss = 0.0;
    EvalReport dev;
};

template <typename T>
struct TrainResult {
    std::vector<EpochRecord> history;
    int64_t best_epoch = 0;
    double best_metric = 0.0;
    ModelParams<T> best_params;
    bool stopped_early = false;
};

template <typename T>
ModelParams<T> clone_params(const ModelParams<T>& params) {
    ModelParams<T> out;
    const auto copy = [](const Tensor<T>& t) {
        Tensor<T> c = Tensor<T>::from(t.shape(), {t.values().begin(), t.values().end()});
        c.set_requires_grad(t.requires_grad());
        return c;
    };
    out.embedding = copy(params.embedding);
    for (const auto& level : params.levels) {
        LevelParams<T> lp;
        lp.conv1_v = copy(level.conv1_v);
        lp.conv1_g = copy(level.conv1_g);
        lp.conv2_v = copy(level.conv2_v);
        lp.conv2_g = copy(level.conv2_g);
        if (level.proj) lp.proj = copy(*level.proj);
        out.levels.push_back(std::move(lp));
    }
    out.attention_u = copy(params.attention_u);
    out.classifier_w = copy(params.classifier_w);
    out.classifier_b = copy(params.classifier_b);
    return out;
}

// Inference scores for a whole example set (dropout off), row-major N x m.
template <typename T>
std::vector<double> score_examples(const std::vector<LabeledExample>& examples,
                                   const ModelParams<T>& params, const ModelConfig& cfg) {
    RngStream unused(0);
    std::vector<double> scores;
    scores.reserve(examples.size() * static_cast<size_t>(cfg.num_labels));
    for (const auto& ex : examples) {
        Tensor<T> probs = model_forward(ex.token_ids, params, cfg, /*training=*/false, unused);
        for (int64_t j = 0; j < probs.numel(); ++j)
            scores.push_back(static_cast<double>(probs.values()[j]));
    }
    return scores;
}

template <typename T>
EvalReport evaluate_examples(const std::vector<LabeledExample>& examples,
                             const ModelParams<T>& params, const ModelConfig& cfg,
                             double threshold, int64_t k,
                             const std::vector<std::string>& label_names) {
    const int64_t n = static_cast<int64_t>(examples.size());
    const int64_t m = cfg.num_labels;
    std::vector<uint8_t> truth(static_cast<size_t>(n * m));
    for (int64_t i = 0; i < n; ++i)
        std::copy(examples[static_cast<size_t>(i)].labels.begin(),
                  examples[static_cast<size_t>(i)].labels.end(), truth.begin() + i * m);
    const std::vector<double> scores = score_examples(examples, params, cfg);
    return evaluate_all(n, m, truth, scores, std::min<int64_t>(k, m), threshold, label_names);
}

// One optimization step over a batch: per-example forward, mean over the
// batch of per-example label-summed BCE (from logits, smoothed targets),
// backward, Adam update. Returns the batch loss.
template <typename T>
double train_step(const Batch& batch, ModelParams<T>& params, const ModelConfig& cfg,
                  AdamState<T>& adam, double smoothing, RngStream& rng) {
    Tape<T> tape;
    typename Tape<T>::Scope scope(tape);
    Tensor<T> total;
    for (int64_t r = 0; r < batch.rows; ++r) {
        const std::vector<int32_t> ids = batch.row_ids(r);
        ForwardResult<T> fwd = model_forward_full(ids, params, cfg, /*training=*/true, rng,
                                                  batch.n_valid[static_cast<size_t>(r)]);
        std::vector<uint8_t> row_labels(batch.labels.begin() + r * batch.num_labels,
                                        batch.labels.begin() + (r + 1) * batch.num_labels);
        Tensor<T> loss = bce_with_logits(fwd.logits, smooth_labels<T>(row_labels, smoothing));
        total = r == 0 ? loss : add(total, loss);
    }
    Tensor<T> mean_loss = scale(total, T(1) / T(batch.rows));
    tape.backward(mean_loss);
    adam_step(params, adam);
    params.zero_grads();
    return static_cast<double>(mean_loss.item());
}

// Epoch loop: shuffle, minibatch steps, dev evaluation, best-checkpoint
// retention by the selection metric, patience-based early stopping.
template <typename T>
TrainResult<T> train(ModelParams<T>& params, const ModelConfig& cfg,
                     const std::vector<LabeledExample>& train_set,
                     const std::vector<LabeledExample>& dev_set, const TrainConfig& tc,
                     AdamState<T>& adam, RngStream& rng,
                     const std::vector<std::string>& label_names = {},
                     const std::function<void(const EpochRecord&)>& on_epoch = nullptr) {
    tc.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training split");
    if (dev_set.empty()) throw std::invalid_argument("train: empty dev split");

    TrainResult<T> result;
    result.best_metric = -std::numeric_limits<double>::infinity();
    int64_t stale = 0;
    for (int64_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        double loss_sum = 0.0;
        int64_t example_count = 0;
        for (const Batch& batch : make_batches(train_set, tc.batch_size, rng, /*shuffle=*/true)) {
            const double batch_loss = train_step(batch, params, cfg, adam, tc.smoothing, rng);
            loss_sum += batch_loss * double(batch.rows);
            example_count += batch.rows;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / double(example_count);
        record.dev = evaluate_examples(dev_set, params, cfg, tc.threshold, /*k=*/5, label_names);
        result.history.push_back(record);
        if (on_epoch) on_epoch(record);

        const double value = metric_value(record.dev, tc.selection_metric);
        if (value > result.best_metric) {
            result.best_metric = value;
            result.best_epoch = epoch;
            result.best_params = clone_params(params);
            stale = 0;
        } else {
            ++stale;
            if (stale > tc.patience) {
                result.stopped_early = true;
                break;
            }
        }
    }
    return result;
}

}  // namespace dcan
