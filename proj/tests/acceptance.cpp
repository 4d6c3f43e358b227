// Acceptance suite: every criterion prints one [PASS]/[FAIL] line and the
// process exit code is the number of failures. Criteria can be selected by
// name on the command line; the default runs everything.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dcan/checkpoint.hpp"
#include "dcan/config.hpp"
#include "dcan/data.hpp"
#include "dcan/grad_check.hpp"
#include "dcan/metrics.hpp"
#include "dcan/model.hpp"
#include "dcan/textpipe.hpp"
#include "dcan/train.hpp"

using namespace dcan;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

Tensor<double> random_tensor(Shape shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// ---------------------------------------------------------------------------
// gradient soundness: every layer in isolation plus the full composition

Outcome check_gradients() {
    Outcome out;
    const auto start = Clock::now();
    RngStream rng(0xacce5501);

    const auto bound = [&](const char* what, double err, double tol = 1e-4) {
        out.require(err < tol, std::string(what) + " err=" + std::to_string(err));
    };

    auto x = random_tensor({8}, rng, 0.1, 1.2);
    bound("sigmoid", grad_check<double>([](Tensor<double>& t) { return sigmoid(t); }, x), 1e-6);
    bound("relu", grad_check<double>([](Tensor<double>& t) { return relu(t); }, x));
    bound("mul", grad_check<double>([](Tensor<double>& t) { return mul(t, t); }, x));

    auto m2 = random_tensor({6, 5}, rng);
    bound("softmax0", grad_check<double>([](Tensor<double>& t) { return softmax(t, 0); }, m2));
    bound("softmax1", grad_check<double>([](Tensor<double>& t) { return softmax(t, 1); }, m2));
    bound("softmax-masked",
          grad_check<double>([](Tensor<double>& t) { return softmax(t, 0, 4); }, m2));

    auto a = random_tensor({4, 3}, rng);
    auto b = random_tensor({3, 5}, rng);
    bound("matmul-a", grad_check<double>([&](Tensor<double>& t) { return matmul(t, b); }, a));
    bound("matmul-b", grad_check<double>([&](Tensor<double>& t) { return matmul(a, t); }, b));

    auto v = random_tensor({3, 2, 3}, rng, 0.3, 1.0);
    auto g = random_tensor({3}, rng, 0.5, 2.0);
    bound("weight_norm-v",
          grad_check<double>([&](Tensor<double>& t) { return weight_norm(t, g); }, v));
    bound("weight_norm-g",
          grad_check<double>([&](Tensor<double>& t) { return weight_norm(v, t); }, g));

    auto xc = random_tensor({12, 3}, rng);
    auto fc = random_tensor({4, 3, 3}, rng);
    bound("conv-x",
          grad_check<double>([&](Tensor<double>& t) { return conv1d_dilated(t, fc, 2); }, xc),
          1e-5);
    bound("conv-f",
          grad_check<double>([&](Tensor<double>& t) { return conv1d_dilated(xc, t, 2); }, fc),
          1e-5);

    auto table = random_tensor({9, 4}, rng);
    std::vector<int32_t> ids = {2, 5, 8, 5, 1, 3};
    bound("embedding",
          grad_check<double>([&](Tensor<double>& t) { return embedding_lookup(ids, t); }, table));

    auto u = random_tensor({5, 4}, rng);
    auto feats = random_tensor({7, 5}, rng);
    bound("attention-h", grad_check<double>(
                             [&](Tensor<double>& t) {
                                 auto [att, pooled] = label_attention(t, u);
                                 return pooled;
                             },
                             feats));
    bound("attention-u", grad_check<double>(
                             [&](Tensor<double>& t) {
                                 auto [att, pooled] = label_attention(feats, t);
                                 return pooled;
                             },
                             u));

    auto logits = random_tensor({6}, rng, -2.0, 2.0);
    std::vector<double> targets = {0.905, 0.005, 0.5, 1.0, 0.0, 0.25};
    bound("bce", grad_check<double>(
                     [&](Tensor<double>& t) { return bce_with_logits(t, targets); }, logits),
          1e-6);

    // residual block in isolation
    ModelConfig block_cfg;
    block_cfg.vocab_size = 8;
    block_cfg.embed_dim = 4;
    block_cfg.num_labels = 2;
    block_cfg.kernel_size = 3;
    block_cfg.channels = {6};
    block_cfg.projection_dim = 3;
    block_cfg.dropout_rate = 0.0;
    auto block_params = init_params<double>(block_cfg, rng);
    auto h = random_tensor({10, 4}, rng);
    RngStream quiet(0);
    bound("residual-block",
          grad_check<double>(
              [&](Tensor<double>& t) {
                  return residual_block_forward(t, 0, block_params, block_cfg, false, quiet);
              },
              h));

    // full model + loss, every parameter tensor
    ModelConfig cfg;
    cfg.vocab_size = 12;
    cfg.embed_dim = 6;
    cfg.num_labels = 4;
    cfg.kernel_size = 2;
    cfg.channels = {5, 7};
    cfg.projection_dim = 4;
    cfg.dropout_rate = 0.0;
    auto params = init_params<double>(cfg, rng);
    std::vector<int32_t> doc = {3, 7, 2, 9, 1, 11, 4, 5, 10, 6};
    std::vector<uint8_t> labels = {1, 0, 0, 1};
    const auto smoothed = smooth_labels<double>(labels, 0.1);
    for (auto& [name, tensor] : params.named()) {
        Tensor<double> t = tensor;
        const double err = grad_check<double>(
            [&](Tensor<double>&) {
                RngStream r(0);
                auto fwd = model_forward_full(doc, params, cfg, false, r);
                return bce_with_logits(fwd.logits, smoothed);
            },
            t);
        bound(("model/" + name).c_str(), err);
    }

    const double elapsed = seconds_since(start);
    out.require(elapsed < 120.0, "runtime " + std::to_string(elapsed) + "s exceeds 2 min");
    out.detail += (out.detail.empty() ? "" : "; ") + std::to_string(elapsed) + "s";
    return out;
}

// ---------------------------------------------------------------------------
// convolution oracle: naive per-position summation with explicit zero padding

Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& f, int64_t d) {
    const int64_t n = x.dim(0), c_in = x.dim(1), c_out = f.dim(0), k = f.dim(2);
    Tensor<double> out({n, c_out});
    for (int64_t s = 0; s < n; ++s)
        for (int64_t o = 0; o < c_out; ++o) {
            double acc = 0.0;
            for (int64_t i = 0; i < k; ++i)
                for (int64_t c = 0; c < c_in; ++c)
                    if (s - d * i >= 0) acc += f.at(o, c, i) * x.at(s - d * i, c);
            out.at(s, o) = acc;
        }
    return out;
}

Outcome check_conv_oracle() {
    Outcome out;
    const auto start = Clock::now();
    RngStream rng(0xacce5502);
    int64_t instances = 0;
    double worst = 0.0;
    while (instances < 1000) {
        const int64_t n = 1 + static_cast<int64_t>(rng.below(64));
        const int64_t c_in = 1 + static_cast<int64_t>(rng.below(3));
        const int64_t c_out = 1 + static_cast<int64_t>(rng.below(3));
        const int64_t k = 1 + static_cast<int64_t>(rng.below(5));
        const int64_t d = 1 + static_cast<int64_t>(rng.below(8));
        auto x = random_tensor({n, c_in}, rng);
        auto f = random_tensor({c_out, c_in, k}, rng);
        auto fast = conv1d_dilated(x, f, d);
        auto ref = conv_reference(x, f, d);
        for (int64_t i = 0; i < fast.numel(); ++i)
            worst = std::max(worst, std::abs(fast.values()[i] - ref.values()[i]));
        ++instances;
    }
    out.require(worst < 1e-12, "max deviation " + std::to_string(worst));
    const double elapsed = seconds_since(start);
    out.require(elapsed < 60.0, "runtime exceeds 1 min");
    std::ostringstream os;
    os << instances << " instances, max dev " << worst << ", " << elapsed << "s";
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// causality and receptive field across kernel sizes and depths

ModelParams<double> cone_probe_params(const ModelConfig& cfg) {
    ModelParams<double> params;
    params.embedding = Tensor<double>({cfg.vocab_size, cfg.embed_dim});
    for (int64_t j = 0; j < cfg.embed_dim; ++j) params.embedding.at(3, j) = 1.0;
    int64_t c_in = cfg.embed_dim;
    for (int64_t l = 0; l < cfg.num_levels(); ++l) {
        const int64_t c_out = cfg.channels[static_cast<size_t>(l)];
        LevelParams<double> level;
        level.conv1_v = Tensor<double>({c_out, c_in, cfg.kernel_size}, 1.0);
        level.conv1_g = detail::channel_norms(level.conv1_v);
        level.conv2_v = Tensor<double>({c_out, c_out, cfg.kernel_size}, 1.0);
        level.conv2_g = detail::channel_norms(level.conv2_v);
        if (c_in != c_out) level.proj = Tensor<double>({c_out, c_in, int64_t(1)}, 1.0);
        params.levels.push_back(std::move(level));
        c_in = c_out;
    }
    params.attention_u = Tensor<double>({c_in, cfg.num_labels}, 0.1);
    params.classifier_w = Tensor<double>({cfg.projection_dim, c_in}, 0.1);
    params.classifier_b = Tensor<double>({int64_t(1), cfg.projection_dim});
    return params;
}

Outcome check_receptive_field() {
    Outcome out;
    for (int64_t kc : {2, 3, 5}) {
        for (int64_t levels = 1; levels <= 5; ++levels) {
            ModelConfig cfg;
            cfg.vocab_size = 4;
            cfg.embed_dim = 3;
            cfg.num_labels = 2;
            cfg.kernel_size = kc;
            cfg.channels.assign(static_cast<size_t>(levels), 3);
            cfg.projection_dim = 2;
            cfg.dropout_rate = 0.0;
            cfg.max_len = 4096;
            const int64_t rf = receptive_field(cfg);
            const int64_t t = 3;
            const int64_t n = t + rf + 5;

            auto params = cone_probe_params(cfg);
            RngStream quiet(0);
            std::vector<int32_t> base_ids(static_cast<size_t>(n), 2);
            std::vector<int32_t> flip_ids = base_ids;
            flip_ids[static_cast<size_t>(t)] = 3;
            auto base = model_forward_full(base_ids, params, cfg, false, quiet).features;
            auto flip = model_forward_full(flip_ids, params, cfg, false, quiet).features;
            int64_t first = -1, last = -1;
            for (int64_t s = 0; s < n; ++s) {
                bool diff = false;
                for (int64_t c = 0; c < base.dim(1); ++c) diff |= base.at(s, c) != flip.at(s, c);
                if (diff) {
                    if (first < 0) first = s;
                    last = s;
                }
            }
            std::ostringstream tag;
            tag << "kc=" << kc << ",L=" << levels;
            out.require(first == t, tag.str() + ": influence leaked before the flip");
            out.require(last == t + rf - 1, tag.str() + ": measured reach " +
                                                std::to_string(last - t + 1) + " != rf " +
                                                std::to_string(rf));
        }
    }
    if (out.pass) out.detail = "kc in {2,3,5} x L in {1..5}, exact";
    return out;
}

// ---------------------------------------------------------------------------
// attention and pooling contracts

Outcome check_attention_contracts() {
    Outcome out;
    RngStream rng(0xacce5503);
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t n = 2 + static_cast<int64_t>(rng.below(30));
        const int64_t h = 1 + static_cast<int64_t>(rng.below(8));
        const int64_t m = 1 + static_cast<int64_t>(rng.below(6));
        auto feats = random_tensor({n, h}, rng, -5.0, 5.0);
        auto u = random_tensor({h, m}, rng, -3.0, 3.0);
        auto [att, pooled] = label_attention(feats, u);
        for (int64_t j = 0; j < m; ++j) {
            double s = 0;
            for (int64_t i = 0; i < n; ++i) s += att.at(i, j);
            out.require(std::abs(s - 1.0) < 1e-12, "attention column sum off by " +
                                                       std::to_string(std::abs(s - 1.0)));
        }
        for (int64_t c = 0; c < h; ++c) {
            double lo = feats.at(0, c), hi = feats.at(0, c);
            for (int64_t i = 1; i < n; ++i) {
                lo = std::min(lo, feats.at(i, c));
                hi = std::max(hi, feats.at(i, c));
            }
            for (int64_t j = 0; j < m; ++j)
                out.require(pooled.at(j, c) >= lo - 1e-12 && pooled.at(j, c) <= hi + 1e-12,
                            "pooled row escaped the convex hull");
        }
        if (!out.pass) return out;
    }

    // padding invariance on a real model
    ModelConfig cfg;
    cfg.vocab_size = 30;
    cfg.embed_dim = 8;
    cfg.num_labels = 5;
    cfg.kernel_size = 3;
    cfg.channels = {10, 10};
    cfg.projection_dim = 4;
    cfg.dropout_rate = 0.0;
    auto params = init_params<double>(cfg, rng);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t n = 3 + static_cast<int64_t>(rng.below(24));
        std::vector<int32_t> ids;
        for (int64_t i = 0; i < n; ++i)
            ids.push_back(1 + static_cast<int32_t>(rng.below(29)));
        std::vector<int32_t> padded = ids;
        padded.resize(ids.size() + 1 + rng.below(40), 0);
        RngStream quiet(0);
        auto plain = model_forward(ids, params, cfg, false, quiet);
        auto masked = model_forward(padded, params, cfg, false, quiet,
                                    static_cast<int64_t>(ids.size()));
        for (int64_t j = 0; j < cfg.num_labels; ++j)
            worst = std::max(worst,
                             std::abs(plain.values()[j] - masked.values()[j]));
    }
    out.require(worst < 1e-10, "padding moved probabilities by " + std::to_string(worst));
    std::ostringstream os;
    os << "sums exact, hull exact, padding dev " << worst;
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// loss and smoothing identities

Outcome check_loss_smoothing() {
    Outcome out;
    RngStream rng(0xacce5504);
    for (int trial = 0; trial < 200; ++trial) {
        const double alpha = rng.uniform();
        const int64_t m = 1 + static_cast<int64_t>(rng.below(64));
        std::vector<uint8_t> y(static_cast<size_t>(m));
        for (auto& v : y) v = rng.uniform() < 0.3 ? 1 : 0;
        const auto s = smooth_labels<double>(y, alpha);
        for (double v : s)
            out.require(v >= alpha / double(m) - 1e-15 &&
                            v <= 1.0 - alpha + alpha / double(m) + 1e-15,
                        "smoothed target escaped its bounds");
        if (!out.pass) return out;
    }
    for (int64_t m : {1, 5, 50, 500}) {
        const std::vector<double> half(static_cast<size_t>(m), 0.5);
        std::vector<double> y(static_cast<size_t>(m));
        RngStream flip(7);
        for (auto& v : y) v = flip.uniform() < 0.5 ? 1.0 : 0.0;
        const double loss = bce_loss(y, half);
        out.require(std::abs(loss - double(m) * std::log(2.0)) < 1e-10,
                    "bce at 0.5 deviates from m*ln2 for m=" + std::to_string(m));
    }
    if (out.pass) out.detail = "bounds over 200 sampled alpha, bce(0.5) = m*ln2 within 1e-10";
    return out;
}

// ---------------------------------------------------------------------------
// metric oracles

double auc_bruteforce(const std::vector<double>& scores, const std::vector<uint8_t>& truth) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (!truth[i]) continue;
        for (size_t j = 0; j < truth.size(); ++j) {
            if (truth[j]) continue;
            ++pairs;
            wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    }
    return pairs == 0 ? -1.0 : wins / double(pairs);
}

Outcome check_metric_oracles() {
    Outcome out;
    RngStream rng(0xacce5505);
    int64_t instances = 0;
    while (instances < 500) {
        const int64_t n = 1 + static_cast<int64_t>(rng.below(50));
        const int64_t m = 1 + static_cast<int64_t>(rng.below(8));
        std::vector<uint8_t> truth(static_cast<size_t>(n * m)), pred(truth.size());
        std::vector<double> scores(truth.size());
        for (auto& v : truth) v = rng.uniform() < 0.35 ? 1 : 0;
        for (auto& v : pred) v = rng.uniform() < 0.35 ? 1 : 0;
        for (auto& s : scores) s = std::round(rng.uniform(-1.0, 1.0) * 8.0) / 8.0;

        const auto f1 = f1_scores(n, m, truth, pred);
        int64_t tp = 0, fp = 0, fn = 0;
        double macro = 0.0;
        for (int64_t j = 0; j < m; ++j) {
            int64_t ltp = 0, lfp = 0, lfn = 0;
            for (int64_t i = 0; i < n; ++i) {
                const bool t = truth[static_cast<size_t>(i * m + j)];
                const bool p = pred[static_cast<size_t>(i * m + j)];
                ltp += t && p;
                lfp += !t && p;
                lfn += t && !p;
            }
            tp += ltp;
            fp += lfp;
            fn += lfn;
            macro += (2 * ltp + lfp + lfn) == 0
                         ? 0.0
                         : 2.0 * double(ltp) / double(2 * ltp + lfp + lfn);
        }
        const double micro_ref =
            (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * double(tp) / double(2 * tp + fp + fn);
        out.require(std::abs(f1.micro - micro_ref) < 1e-12, "micro F1 deviates from oracle");
        out.require(std::abs(f1.macro - macro / double(m)) < 1e-12,
                    "macro F1 deviates from oracle");

        const auto auc = auc_scores(n, m, truth, scores);
        std::vector<double> col_s(static_cast<size_t>(n));
        std::vector<uint8_t> col_t(static_cast<size_t>(n));
        for (int64_t j = 0; j < m; ++j) {
            for (int64_t i = 0; i < n; ++i) {
                col_s[static_cast<size_t>(i)] = scores[static_cast<size_t>(i * m + j)];
                col_t[static_cast<size_t>(i)] = truth[static_cast<size_t>(i * m + j)];
            }
            const double ref = auc_bruteforce(col_s, col_t);
            if (ref < 0.0)
                out.require(!auc.per_label[static_cast<size_t>(j)].has_value(),
                            "degenerate label should be undefined");
            else
                out.require(std::abs(*auc.per_label[static_cast<size_t>(j)] - ref) < 1e-12,
                            "per-label AUC deviates from the pair-counting oracle");
        }
        if (!out.pass) return out;
        ++instances;
    }

    // the worked confusion example: micro F1 = macro F1 = 2/3 exactly
    const std::vector<uint8_t> truth = {1, 1, 0, 1};
    const std::vector<uint8_t> pred = {1, 1, 1, 0};
    const auto f1 = f1_scores(2, 2, truth, pred);
    out.require(f1.micro == 2.0 / 3.0, "worked micro F1 mismatch");
    out.require(f1.macro == 2.0 / 3.0, "worked macro F1 mismatch");
    std::ostringstream os;
    os << instances << " instances vs brute force, worked example exact";
    if (out.pass) out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// end-to-end learning on the default synthetic corpus + ablation

double micro_f1_on_columns(const std::vector<LabeledExample>& examples,
                           const std::vector<double>& scores, double threshold,
                           const std::vector<int64_t>& columns, int64_t m) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < examples.size(); ++i)
        for (int64_t j : columns) {
            const bool t = examples[i].labels[static_cast<size_t>(j)] != 0;
            const bool p = scores[i * static_cast<size_t>(m) + static_cast<size_t>(j)] >=
                           threshold;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
        }
    const double denom = 2.0 * double(tp) + double(fp) + double(fn);
    return denom == 0.0 ? 0.0 : 2.0 * double(tp) / denom;
}

Outcome check_end_to_end() {
    Outcome out;
    const RunConfig defaults;  // the shipped default configuration

    const SynthCorpus corpus = generate_synthetic(defaults.synth);
    std::vector<std::vector<std::string>> token_lists;
    for (const auto& doc : corpus.train) token_lists.push_back(preprocess(doc.text));
    const Vocabulary vocab = build_vocab(token_lists, defaults.data.min_frequency);
    const auto labels = label_space(corpus.train);
    const ModelConfig cfg =
        defaults.make_model_config(vocab.size(), static_cast<int64_t>(labels.size()));

    const auto train_set = to_examples(corpus.train, vocab, labels, cfg.max_len, true);
    const auto dev_set = to_examples(corpus.dev, vocab, labels, cfg.max_len, true);
    const auto test_set = to_examples(corpus.test, vocab, labels, cfg.max_len, true);

    const auto run_training = [&](const ModelConfig& model_cfg) {
        RngStream rng(defaults.train.seed);
        auto params = init_params<double>(model_cfg, rng);
        auto adam = AdamState<double>::fresh(params, defaults.train.lr);
        return train(params, model_cfg, train_set, dev_set, defaults.train, adam, rng, labels,
                     [&](const EpochRecord& r) {
                         std::cout << "    e2e epoch " << r.epoch << " loss " << r.train_loss
                                   << " dev_micro_f1 " << r.dev.micro_f1 << std::endl;
                     });
    };

    const auto start = Clock::now();
    auto full = run_training(cfg);
    const double train_seconds = seconds_since(start);

    double best_dev = 0.0;
    for (const auto& rec : full.history) best_dev = std::max(best_dev, rec.dev.micro_f1);
    out.require(best_dev >= 0.95,
                "dev micro F1 " + std::to_string(best_dev) + " below 0.95 within 30 epochs");
    out.require(train_seconds < 1800.0,
                "training took " + std::to_string(train_seconds) + "s, over 30 min");

    const auto test_scores = score_examples(test_set, full.best_params, cfg);
    std::vector<uint8_t> truth(test_set.size() * static_cast<size_t>(cfg.num_labels));
    for (size_t i = 0; i < test_set.size(); ++i)
        std::copy(test_set[i].labels.begin(), test_set[i].labels.end(),
                  truth.begin() + static_cast<int64_t>(i) * cfg.num_labels);
    const auto test_f1 = [&] {
        std::vector<uint8_t> pred(test_scores.size());
        for (size_t i = 0; i < pred.size(); ++i)
            pred[i] = test_scores[i] >= defaults.train.threshold ? 1 : 0;
        return f1_scores(static_cast<int64_t>(test_set.size()), cfg.num_labels, truth, pred);
    }();
    out.require(test_f1.micro >= 0.90,
                "test micro F1 " + std::to_string(test_f1.micro) + " below 0.90");

    // receptive-field-starved ablation: depth chosen so RF < gap
    ModelConfig starved = cfg;
    while (receptive_field(starved) >= defaults.synth.gap && starved.channels.size() > 1)
        starved.channels.pop_back();
    out.require(receptive_field(starved) < defaults.synth.gap,
                "could not construct an RF-starved ablation");
    std::cout << "    ablation levels " << starved.num_levels() << " rf "
              << receptive_field(starved) << " vs gap " << defaults.synth.gap << std::endl;
    auto ablated = run_training(starved);
    const auto ablated_scores = score_examples(test_set, ablated.best_params, starved);

    std::vector<int64_t> long_range_cols;
    for (size_t j = 0; j < labels.size(); ++j)
        for (const auto& rule : corpus.manifest.rules)
            if (rule.code == labels[j] && rule.long_range)
                long_range_cols.push_back(static_cast<int64_t>(j));
    out.require(!long_range_cols.empty(), "no long-range labels in the corpus");

    const double full_lr_f1 = micro_f1_on_columns(test_set, test_scores,
                                                  defaults.train.threshold, long_range_cols,
                                                  cfg.num_labels);
    const double ablated_lr_f1 = micro_f1_on_columns(test_set, ablated_scores,
                                                     defaults.train.threshold, long_range_cols,
                                                     cfg.num_labels);
    out.require(ablated_lr_f1 < full_lr_f1,
                "ablation long-range micro F1 " + std::to_string(ablated_lr_f1) +
                    " not strictly below the full model's " + std::to_string(full_lr_f1));

    std::ostringstream os;
    os << "dev " << best_dev << ", test " << test_f1.micro << ", long-range full "
       << full_lr_f1 << " vs starved " << ablated_lr_f1 << ", " << train_seconds << "s";
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// CLI determinism: byte-identical history and checkpoints

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return "<missing " + path + ">";
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Outcome check_cli_determinism() {
    Outcome out;
    const fs::path dir = fs::temp_directory_path() / "dcan_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = DCAN_CLI_PATH;
    const auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };

    const std::string data = (dir / "data").string();
    out.require(run("synth --out " + data +
                    " --set synth.num_labels=6 --set synth.train_docs=120"
                    " --set synth.dev_docs=40 --set synth.test_docs=40 --set synth.gap=40"
                    " --set synth.len_min=30 --set synth.len_max=120"
                    " --set synth.filler_vocab=60") == 0,
                "synth failed");
    const std::string common = " --set paths.train=" + data + "/train.jsonl --set paths.dev=" +
                               data +
                               "/dev.jsonl --set model.num_levels=4 --set model.channels=12"
                               " --set model.embed_dim=16 --set model.projection_dim=8"
                               " --set train.epochs=3 --set train.batch_size=8";
    out.require(run("train --out " + (dir / "r1").string() + common) == 0, "train run 1 failed");
    out.require(run("train --out " + (dir / "r2").string() + common) == 0, "train run 2 failed");

    for (const char* f : {"history.txt", "best.ckpt", "last.ckpt"}) {
        const std::string a = slurp((dir / "r1" / f).string());
        const std::string b = slurp((dir / "r2" / f).string());
        out.require(!a.empty() && a == b, std::string(f) + " differs between seeded runs");
    }
    if (out.pass) out.detail = "history.txt, best.ckpt, last.ckpt byte-identical";
    fs::remove_all(dir);
    return out;
}

// ---------------------------------------------------------------------------
// parameter counting report

Outcome check_parameter_report() {
    Outcome out;
    const RunConfig defaults;
    const ModelConfig cfg = defaults.make_model_config(527, 20);
    RngStream rng(defaults.train.seed);
    auto params = init_params<double>(cfg, rng);
    const auto counts = parameter_counts(params);
    int64_t total = 0;
    std::cout << "    trainable parameters per component:" << std::endl;
    for (const auto& [name, count] : counts) {
        std::cout << "      " << name << " " << count << std::endl;
        if (name != "total") total += count;
    }
    out.require(counts.back().first == "total" && counts.back().second == total,
                "component counts do not add up");
    out.require(total == params.total_parameters(), "total disagrees with the parameter list");
    out.detail = "total " + std::to_string(total);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient-soundness", check_gradients},
        {"convolution-oracle", check_conv_oracle},
        {"causality-receptive-field", check_receptive_field},
        {"attention-pooling-contracts", check_attention_contracts},
        {"loss-smoothing", check_loss_smoothing},
        {"metric-oracles", check_metric_oracles},
        {"end-to-end-learning", check_end_to_end},
        {"determinism", check_cli_determinism},
        {"parameter-counting", check_parameter_report},
    };

    std::set<std::string> selected;
    for (int i = 1; i < argc; ++i) selected.insert(argv[i]);

    int failures = 0;
    for (auto& [name, fn] : criteria) {
        if (!selected.empty() && !selected.count(name)) continue;
        std::cout << "==> " << name << std::endl;
        Outcome outcome;
        try {
            outcome = fn();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        std::cout << (outcome.pass ? "[PASS] " : "[FAIL] ") << name
                  << (outcome.detail.empty() ? "" : " — " + outcome.detail) << std::endl;
        if (!outcome.pass) ++failures;
    }
    return failures;
}
